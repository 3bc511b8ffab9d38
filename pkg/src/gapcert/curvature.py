"""Curvature field rho(x) = lambda_min(Hess V(x)) and the form-bound discount."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonSymmetricHessian, PreconditionError
from .fields import Piece, ScalarField
from .measures import (
    NormalizedMeasure,
    PotentialEvaluator,
    RadialMeasure,
    _unwrap,
    cell_sample,
    full_space,
)

_SYM_RTOL = 1e-12


def hessian_min_eigenvalue(pe: PotentialEvaluator, x) -> float | np.ndarray:
    """Smallest eigenvalue of Hess V at one point (scalar) or many (array)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    H = pe.hess(x)
    asym = np.linalg.norm(H - np.swapaxes(H, -1, -2), axis=(-2, -1))
    scale = np.maximum(np.linalg.norm(H, axis=(-2, -1)), np.finfo(float).tiny)
    if np.any(asym > _SYM_RTOL * scale):
        raise NonSymmetricHessian(f"Hessian asymmetry {float(np.max(asym / scale)):.3g} exceeds {_SYM_RTOL:g}")
    lam = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))[..., 0]
    return float(lam[0]) if single else lam


class CurvatureField(ScalarField):
    """rho as a scalar field; radial (called with radii) when the source is radial."""

    def __init__(self, source, func, *, radial, pieces=None, name="rho"):
        super().__init__(func, radial=radial, pieces=pieces, name=name)
        self.source = source

    @property
    def radial_profile(self):
        return self if self.radial else None

    def eval(self, x) -> np.ndarray:
        """rho at cartesian points of shape (m, n)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.radial:
            return self(np.linalg.norm(pts, axis=-1))
        return self(pts)


def _power_law_pieces(m: RadialMeasure) -> list[Piece] | None:
    fam, n = m.family, m.dim
    alpha = fam.alpha
    if alpha < 1:
        return None
    # Pure profile: min(W'', W'/r) = min(alpha-1, 1) r^(alpha-2); W'' alone in 1-D.
    coef = alpha - 1.0 if (n == 1 or alpha < 2) else 1.0
    trend = int(np.sign(alpha - 2.0)) if alpha != 1 else 0

    def pure(r, coef=coef):
        with np.errstate(divide="ignore"):
            return coef * np.asarray(r, dtype=float) ** (alpha - 2.0)

    if alpha == 1.0:
        pure = lambda r: np.zeros(np.shape(r))  # noqa: E731
    if fam.branch == "pure":
        return [Piece(0.0, math.inf, pure, trend)]
    R = m.breakpoints[0]
    if fam.branch == "prop71":
        # Outside R: W'' = kappa <= W'/r because kappa <= R^(alpha-2).
        kappa = fam.c * (fam.a * n) ** ((alpha - 2.0) / alpha)
        return [Piece(0.0, R, pure, trend), Piece(R, math.inf, lambda r: np.full(np.shape(r), kappa), 0)]
    kappa = R ** (alpha - 2.0)
    return [Piece(0.0, R, lambda r: np.full(np.shape(r), kappa), 0), Piece(R, math.inf, pure, trend)]


def curvature_field(measure) -> CurvatureField:
    """rho for a radial measure (closed form for power laws) or an evaluator."""
    base = _unwrap(measure)
    if isinstance(base, RadialMeasure):
        n = base.dim

        def rho(r):
            r = np.asarray(r, dtype=float)
            d2 = base.d2W(r)
            if n == 1:
                return d2
            with np.errstate(divide="ignore", invalid="ignore"):
                tang = np.where(r > 0, base.dW(r) / np.where(r > 0, r, 1.0), d2)
            return np.minimum(d2, tang)

        pieces = _power_law_pieces(base) if base.is_power_law else None
        return CurvatureField(base, rho, radial=True, pieces=pieces, name=f"rho[{base.label}]")

    def rho_points(pts):
        return np.asarray(hessian_min_eigenvalue(base, np.atleast_2d(pts)), dtype=float)

    return CurvatureField(base, rho_points, radial=False, name=f"rho[{base.label}]")


def rho_split(cf: ScalarField, cell=None) -> tuple[ScalarField, ScalarField]:
    """(rho+, rho-) with rho = rho+ - rho-; piece structure is preserved.

    ``cell`` is accepted for interface symmetry; the split is pointwise.
    """
    plus = cf.map(lambda v: np.maximum(v, 0.0), monotone=1, name=f"{cf.name}+")
    minus = cf.map(lambda v: np.maximum(-v, 0.0), monotone=-1, name=f"{cf.name}-")
    return plus, minus


def overlap_weighted(cf: ScalarField, N: int) -> ScalarField:
    """rho+ - N rho-: the per-cell potential that keeps a signed covering sum valid."""
    if N == 1:
        return cf
    return cf.map(lambda v: np.where(v >= 0, v, N * v), monotone=1, name=f"{cf.name}[N={N}]")


@dataclass(frozen=True)
class FormBoundSpec:
    alpha_fb: float = 0.0
    provenance: str = "assumed_zero"

    def __post_init__(self):
        if not 0.0 <= self.alpha_fb < 1.0:
            raise ValueError("alpha_fb must lie in [0, 1)")
        if self.provenance not in ("user_supplied", "assumed_zero"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


def apply_form_bound_discount(bound: float, fb: FormBoundSpec) -> float:
    """(1 - alpha_fb) * bound."""
    if bound < 0:
        raise PreconditionError("form-bound discount applies to nonnegative bounds")
    return (1.0 - fb.alpha_fb) * bound


def probe_negative_part(cf: CurvatureField, measure, count: int = 256) -> bool:
    """True if rho < 0 somewhere on a deterministic probe set of ``count`` points."""
    if cf.pieces is not None:
        return cf.extrema(full_space(cf.source.dim)).inf < 0
    base = _unwrap(measure)
    if cf.radial:
        nm = measure if isinstance(measure, NormalizedMeasure) else None
        top = nm.tail_radius if nm is not None else float(np.max(cell_sample(base, full_space(base.dim))[0]))
        probes = np.linspace(0.0, top, count + 1)[1:]
    else:
        pts, w = cell_sample(base, full_space(base.dim), size=max(count, 64))
        probes = pts[np.argsort(-w, kind="stable")[:count]]
    return bool(np.any(cf(probes) < 0))


def resolve_form_bound(cf: CurvatureField, measure, user_alpha: float | None, probe_count: int = 256):
    """Form-bound spec plus whether rho has a negative part on the probe set."""
    negative = probe_negative_part(cf, measure, probe_count)
    if user_alpha is not None:
        return FormBoundSpec(float(user_alpha), "user_supplied"), negative
    return FormBoundSpec(0.0, "assumed_zero"), negative
