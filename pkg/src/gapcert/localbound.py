"""Per-cell lower bounds on the bottom of the spectrum of Delta_mu + U on a cell K.

All means are averages over K under the measure conditioned on K, and
lambda is the cell's Poincare constant lambda_1(K).

================  ==========================================================
constant_floor    inf_K U
capped_ratio      lambda * mean(U) / (lambda + 2 sup_K U)
half_min          mean(min(lambda/2, U)) / 2
shifted_k         max_k  k + mean(min(lambda/2, U - k)) / 2,  0 <= k <= inf_K U
signed_kappa      max_(kappa,k)  k + mean(min(lambda/2, (U-k)+) / 2 - (U-k)-/kappa)
                  subject to  max(0, k - inf_K U) <= (1 - kappa) lambda / 2
================  ==========================================================

The signed estimate comes from averaging a b / (a + b) with a = lambda/2 and
b = U - k.  That quantity is at least min(a, b)/2 where b >= 0 but only b/kappa
where b < 0, so the negative part carries no factor 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyFeasibleGrid,
    NoApplicableMethod,
    PreconditionError,
    QuadratureFailure,
    UnboundedPotential,
    UncertifiedInfimum,
)
from .fields import Extrema, ScalarField
from .measures import Cell, _field_on_points, _is_radial_field, cell_average, cell_sample
from .poincare import PoincareEstimate

METHOD_ORDER = ("constant_floor", "shifted_k", "signed_kappa", "half_min", "capped_ratio")
DEFAULT_KAPPA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class LocalBoundReport:
    cell: Cell
    method: str
    lambda1K: PoincareEstimate | None
    delta_mean: float
    value: float
    certified: bool
    k_used: float | None = None
    kappa_used: float | None = None
    inputs: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class LocalBoundConfig:
    methods_enabled: tuple[str, ...] = METHOD_ORDER
    k_grid_size: int = 16
    kappa_grid: tuple[float, ...] = DEFAULT_KAPPA_GRID
    k_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        unknown = set(self.methods_enabled) - set(METHOD_ORDER)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if any(not 0 < k < 1 for k in self.kappa_grid):
            raise ValueError("kappa values must lie in (0, 1)")


def harmonic_pair(a, b):
    """a b / (a + b); lies between min(a, b)/2 and min(a, b) for positive a, b."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a * b / (a + b)


class _Derived:
    """Field built from U, keeping its radial calling convention."""

    def __init__(self, U, op):
        self.radial = _is_radial_field(U)
        self._U, self._op = U, op

    def __call__(self, x):
        return self._op(np.asarray(self._U(x), dtype=float))


def _as_field(U) -> ScalarField:
    if isinstance(U, ScalarField):
        return U
    if isinstance(U, (int, float)):
        return ScalarField.constant(U)
    return ScalarField(U, radial=_is_radial_field(U))


def _mean(f, measure, cell) -> tuple[np.ndarray | float, bool]:
    res = cell_average(f, measure, cell)
    return res.value, res.converged


def _require_lambda(p: PoincareEstimate | None) -> float:
    if p is None:
        raise PreconditionError("this method needs a Poincare constant for the cell")
    return p.lambda1


def _extrema(U: ScalarField, cell) -> Extrema:
    return U.extrema(cell)


# --------------------------------------------------------------------------
# Methods
# --------------------------------------------------------------------------


def bound_constant_floor(U, cell: Cell, measure=None) -> LocalBoundReport:
    U = _as_field(U)
    ext = _extrema(U, cell)
    if not ext.certified:
        raise UncertifiedInfimum("infimum is only sampled; supply closed-form pieces or an enclosure")
    return LocalBoundReport(cell, "constant_floor", None, ext.inf, ext.inf, True,
                            inputs={"inf_U": ext.inf})


def bound_capped_ratio(U, cell: Cell, p: PoincareEstimate, measure) -> LocalBoundReport:
    U = _as_field(U)
    lam = _require_lambda(p)
    ext = _extrema(U, cell)
    if ext.inf < 0:
        raise PreconditionError("capped_ratio needs U >= 0 on the cell")
    if not math.isfinite(ext.sup):
        raise UnboundedPotential("sup of U is infinite; cap U first")
    mean, ok = _mean(U, measure, cell)
    value = lam * mean / (lam + 2.0 * ext.sup)
    return LocalBoundReport(cell, "capped_ratio", p, float(mean), float(value),
                            bool(p.certified and ok and ext.certified),
                            inputs={"sup_U": ext.sup, "inf_U": ext.inf})


def bound_half_min(U, cell: Cell, p: PoincareEstimate, measure) -> LocalBoundReport:
    U = _as_field(U)
    lam = _require_lambda(p)
    ext = _extrema(U, cell)
    if ext.inf < 0:
        raise PreconditionError("half_min needs U >= 0 on the cell")
    mean, ok = _mean(_Derived(U, lambda u: np.minimum(0.5 * lam, u)), measure, cell)
    return LocalBoundReport(cell, "half_min", p, float(mean), 0.5 * float(mean),
                            bool(p.certified and ok and ext.certified), inputs={"inf_U": ext.inf})


def default_k_grid(U, cell: Cell, measure, size: int = 16) -> np.ndarray:
    """0 together with the measure quantiles j/size (j < size) of U on the cell."""
    U = _as_field(U)
    nodes, weights = cell_sample(measure, cell)
    if nodes.ndim == 1:
        # Radii; a cartesian U is probed along the first axis.
        vals = U(nodes) if U.radial else U(np.outer(nodes, np.eye(cell.dim)[0]))
    else:
        vals = _field_on_points(U, nodes)
    vals = np.asarray(vals, dtype=float)
    order = np.argsort(vals, kind="stable")
    cdf = np.cumsum(weights[order])
    probs = np.arange(size) / size
    idx = np.minimum(np.searchsorted(cdf, probs, side="left"), len(vals) - 1)
    qs = vals[order][idx]
    return np.unique(np.concatenate([[0.0], np.maximum(qs[np.isfinite(qs)], 0.0)]))


def bound_shifted_k(U, cell: Cell, p: PoincareEstimate, measure, k_grid=None) -> LocalBoundReport:
    U = _as_field(U)
    lam = _require_lambda(p)
    ext = _extrema(U, cell)
    ks = np.asarray(default_k_grid(U, cell, measure) if k_grid is None else k_grid, dtype=float)
    if k_grid is None:
        ks = np.unique(np.minimum(ks, max(ext.inf, 0.0)))
    ks = ks[(ks >= 0) & (ks <= ext.inf)]
    if ks.size == 0:
        raise EmptyFeasibleGrid(f"no k in the grid satisfies 0 <= k <= inf U = {ext.inf:.6g}")
    field_ = _Derived(U, lambda u: np.minimum(0.5 * lam, u[:, None] - ks[None, :]))
    means, ok = _mean(field_, measure, cell)
    means = np.atleast_1d(means)
    values = ks + 0.5 * means
    i = int(np.argmax(values))
    return LocalBoundReport(cell, "shifted_k", p, float(means[i]), float(values[i]),
                            bool(p.certified and ok and ext.certified), k_used=float(ks[i]),
                            inputs={"inf_U": ext.inf, "k_grid": ks.tolist()})


def bound_signed_kappa(U, cell: Cell, p: PoincareEstimate, measure, kappa_grid=DEFAULT_KAPPA_GRID,
                       k_grid=None) -> LocalBoundReport:
    U = _as_field(U)
    lam = _require_lambda(p)
    ext = _extrema(U, cell)
    ks = np.asarray(default_k_grid(U, cell, measure) if k_grid is None else k_grid, dtype=float)
    ks = np.unique(ks[ks >= 0])
    kappas = np.asarray(kappa_grid, dtype=float)
    K, Q = np.meshgrid(ks, kappas, indexing="ij")
    feasible = np.maximum(0.0, K - ext.inf) <= (1.0 - Q) * 0.5 * lam
    if not feasible.any():
        raise EmptyFeasibleGrid("no (kappa, k) pair satisfies the negative-part condition")
    pairs_k, pairs_q = K[feasible], Q[feasible]

    def op(u):
        d = u[:, None] - pairs_k[None, :]
        pos, neg = np.maximum(d, 0.0), np.maximum(-d, 0.0)
        return 0.5 * np.minimum(0.5 * lam, pos) - neg / pairs_q[None, :]

    means, ok = _mean(_Derived(U, op), measure, cell)
    means = np.atleast_1d(means)
    values = pairs_k + means
    # Ties go to the smallest k, then the largest kappa.
    order = np.lexsort((-pairs_q, pairs_k, -values))
    i = int(order[0])
    return LocalBoundReport(cell, "signed_kappa", p, float(means[i]), float(values[i]),
                            bool(p.certified and ok and ext.certified),
                            k_used=float(pairs_k[i]), kappa_used=float(pairs_q[i]),
                            inputs={"inf_U": ext.inf, "negative_part": bool(ext.inf < pairs_k[i])})


# --------------------------------------------------------------------------
# Selector
# --------------------------------------------------------------------------


def _is_duplicate(report: LocalBoundReport) -> bool:
    """Reports that are another method in disguise do not compete."""
    if report.method == "constant_floor":
        return not report.value > 0
    if report.method == "shifted_k":
        return report.k_used == 0.0
    if report.method == "signed_kappa":
        return not report.inputs.get("negative_part", False)
    return False


def best_local_bound(U, cell: Cell, p: PoincareEstimate | None, measure,
                     config: LocalBoundConfig | None = None) -> LocalBoundReport:
    """Largest applicable bound; ties follow METHOD_ORDER."""
    config = config or LocalBoundConfig()
    U = _as_field(U)
    k_grid = config.k_grid
    if k_grid is None and p is not None and any(m in config.methods_enabled for m in ("shifted_k", "signed_kappa")):
        k_grid = default_k_grid(U, cell, measure, config.k_grid_size)
    runners = {
        "constant_floor": lambda: bound_constant_floor(U, cell, measure),
        "capped_ratio": lambda: bound_capped_ratio(U, cell, p, measure),
        "half_min": lambda: bound_half_min(U, cell, p, measure),
        "shifted_k": lambda: bound_shifted_k(U, cell, p, measure, _clamped(k_grid, U, cell)),
        "signed_kappa": lambda: bound_signed_kappa(U, cell, p, measure, config.kappa_grid, k_grid),
    }
    reports, skipped = [], {}
    for method in METHOD_ORDER:
        if method not in config.methods_enabled:
            continue
        try:
            reports.append(runners[method]())
        except QuadratureFailure:
            raise
        except PreconditionError as exc:
            skipped[method] = f"{type(exc).__name__}: {exc}"
    contenders = [r for r in reports if not _is_duplicate(r)] or reports
    if not contenders:
        raise NoApplicableMethod(f"no method applies on {cell}: {skipped}")
    rank = {m: i for i, m in enumerate(METHOD_ORDER)}
    return max(contenders, key=lambda r: (r.value, -rank[r.method]))


def _clamped(k_grid, U, cell):
    if k_grid is None:
        return None
    inf = U.extrema(cell).inf
    ks = np.unique(np.minimum(np.asarray(k_grid, dtype=float), max(inf, 0.0)))
    return ks
