"""Cell Poincare constants lambda_1(K) with certification provenance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionTooSmall,
    NoCertifiedEstimate,
    NotCentered,
    NotLogConcave,
    PreconditionError,
    UnsupportedGeometry,
)
from .measures import (
    Ball,
    BallComplement,
    Box,
    PotentialEvaluator,
    RadialMeasure,
    _Power,
    _unwrap,
    mean_over_cell,
    moment,
    radial_range,
)

CERTIFIED_SOURCES = frozenset({"bobkov_radial", "bobkov_1d", "user_constant"})


@dataclass(frozen=True)
class PoincareEstimate:
    lambda1: float
    certified: bool
    source: str
    basis: str = ""

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be positive")
        if self.certified and self.source not in CERTIFIED_SOURCES:
            raise ValueError(f"source {self.source!r} cannot be certified")


class GapBounds(NamedTuple):
    lower: float
    upper: float


@dataclass(frozen=True)
class PoincarePolicy:
    kind: str = "certified_only"
    user_value: float | None = None

    def __post_init__(self):
        if self.kind not in ("certified_only", "allow_numerical", "user"):
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.kind == "user" and not (self.user_value and self.user_value > 0):
            raise ValueError("user policy needs a positive value")


# --------------------------------------------------------------------------
# Log-concavity
# --------------------------------------------------------------------------


def log_concavity_basis(measure, lo: float = 0.0, hi: float = math.inf) -> str:
    """'closed_form' or 'sampled'; raises NotLogConcave when the check fails.

    Radial profiles must be convex and nondecreasing on [lo, hi].
    """
    base = _unwrap(measure)
    if isinstance(base, RadialMeasure):
        if base.is_power_law:
            if base.family.alpha < 1:
                raise NotLogConcave("exponential power measures need alpha >= 1")
            return "closed_form"
        top = hi if np.isfinite(hi) else max(lo, 1.0) * 64.0
        rs = np.linspace(max(lo, 1e-9), top, 512)
        if np.any(base.d2W(rs) < -1e-10) or np.any(base.dW(rs) < -1e-10):
            raise NotLogConcave("profile is not convex nondecreasing on the sampled radii")
        return "sampled"
    if base.dim != 1:
        raise NotLogConcave("log-concavity checks for non-radial measures are one-dimensional")
    xs = np.linspace(max(lo, -64.0), min(hi, 64.0), 512)[:, None]
    if np.any(base.hess(xs)[:, 0, 0] < -1e-10):
        raise NotLogConcave("V'' < 0 at a sampled point")
    return "sampled"


# --------------------------------------------------------------------------
# Bobkov bounds
# --------------------------------------------------------------------------


def _bobkov_cell(cell, dim):
    if cell is None:
        return Ball(math.inf, dim)
    if isinstance(cell, Ball) and cell.centered or isinstance(cell, BallComplement):
        return cell
    raise UnsupportedGeometry("Bobkov bounds need a centered ball, its complement or full space")


def bobkov_gap_bounds(measure, cell=None) -> GapBounds:
    """((n-1)/M2, n/M2) with M2 the second moment of the measure conditioned on the cell."""
    base = _unwrap(measure)
    if not isinstance(base, RadialMeasure):
        raise NotLogConcave("Bobkov bounds need a radial measure")
    if base.dim < 2:
        raise DimensionTooSmall("n = 1: use bobkov_1d_lower")
    cell = _bobkov_cell(cell, base.dim)
    log_concavity_basis(base, *radial_range(cell))
    m2 = moment(measure, cell, 2.0)
    n = base.dim
    return GapBounds((n - 1) / m2, n / m2)


def bobkov_estimate(measure, cell=None) -> PoincareEstimate:
    base = _unwrap(measure)
    cell = _bobkov_cell(cell, base.dim)
    lower, _ = bobkov_gap_bounds(measure, cell)
    basis = log_concavity_basis(base, *radial_range(cell))
    return PoincareEstimate(lower, True, "bobkov_radial", basis)


def _symmetric_interval(cell) -> tuple[float, float]:
    if cell is None:
        return -math.inf, math.inf
    if isinstance(cell, Ball):
        if not cell.centered:
            raise NotCentered("1-D bound needs a cell symmetric about 0")
        return -cell.radius, cell.radius
    if isinstance(cell, Box):
        lo, hi = cell.lo[0], cell.hi[0]
        if lo != -hi:
            raise NotCentered("1-D bound needs a cell symmetric about 0")
        return lo, hi
    raise UnsupportedGeometry("1-D bound needs an interval; complements are disconnected")


def bobkov_1d_lower(measure, cell=None) -> PoincareEstimate:
    """1/(12 M2) for a centered log-concave measure on a symmetric interval."""
    base = _unwrap(measure)
    if base.dim != 1:
        raise PreconditionError("bobkov_1d_lower is for dimension 1")
    lo, hi = _symmetric_interval(cell)
    basis = log_concavity_basis(base, 0.0 if isinstance(base, RadialMeasure) else lo, hi)
    cell = Ball(hi, 1) if np.isfinite(hi) else Ball(math.inf, 1)
    if isinstance(base, PotentialEvaluator):
        first = mean_over_cell(lambda x: x[:, 0], base, cell)
        m2 = mean_over_cell(lambda x: x[:, 0] ** 2, base, cell)
        if abs(first) > 1e-8 * math.sqrt(m2):
            raise NotCentered(f"measure has mean {first:.3g} on the cell")
    else:
        m2 = mean_over_cell(_Power(2.0), base, cell)
    return PoincareEstimate(1.0 / (12.0 * m2), True, "bobkov_1d", basis)


# --------------------------------------------------------------------------
# Dispatcher
# --------------------------------------------------------------------------


def _certified(cell, measure) -> PoincareEstimate:
    base = _unwrap(measure)
    try:
        if base.dim == 1:
            return bobkov_1d_lower(measure, cell)
        if isinstance(base, RadialMeasure):
            return bobkov_estimate(measure, cell)
    except (UnsupportedGeometry, NotCentered, NotLogConcave) as exc:
        raise NoCertifiedEstimate(str(exc)) from exc
    raise NoCertifiedEstimate("no certified Poincare constant for a non-radial measure in dim >= 2")


def _numerical(cell, measure, mesh: int = 2048) -> PoincareEstimate:
    from . import oracle

    base = _unwrap(measure)
    if base.dim == 1 and isinstance(cell, BallComplement):
        raise NoCertifiedEstimate("a 1-D ball complement is disconnected and has no spectral gap")
    if isinstance(base, RadialMeasure) and (cell is None or radial_range(cell) is not None):
        res = oracle.radial_sector_gap(base, cell, mesh=mesh)
    elif base.dim == 1 and isinstance(cell, (Ball, Box)):
        lo, hi = (cell.lo[0], cell.hi[0]) if isinstance(cell, Box) else (
            float(cell.origin[0]) - cell.radius, float(cell.origin[0]) + cell.radius)
        res = oracle.interval_gap(base, lo, hi, mesh=mesh)
    elif base.dim == 2 and isinstance(cell, Box):
        res = oracle.box_gap(base, cell, cells_per_edge=64)
    else:
        raise NoCertifiedEstimate(f"no oracle for {type(cell).__name__} in dimension {base.dim}")
    if not res.value > res.error_estimate:
        raise NoCertifiedEstimate("cell has no spectral gap (disconnected or degenerate)")
    return PoincareEstimate(res.value, False, "numerical_oracle", res.method)


def lambda1_supply(cell, measure, policy: PoincarePolicy | str = "certified_only") -> PoincareEstimate:
    """Poincare constant of the cell under the given policy.

    ``allow_numerical`` tries the certified path first and falls back to an
    uncertified oracle value.
    """
    if isinstance(policy, str):
        policy = PoincarePolicy(policy)
    if policy.kind == "user":
        return PoincareEstimate(float(policy.user_value), True, "user_constant")
    try:
        return _certified(cell, measure)
    except NoCertifiedEstimate:
        if policy.kind == "certified_only":
            raise
    return _numerical(cell, measure)

