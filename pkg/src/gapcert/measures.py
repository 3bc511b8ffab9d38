"""Weighted measures e^{-V} dx on R^n, cells, normalization and cell averages.

Two kinds of measure are supported:

* :class:`RadialMeasure` -- ``V(x) = W(|x|)``; any dimension, integrals are
  reduced to one radial integral with density ``r^(n-1) e^{-W(r)}``.
* :class:`PotentialEvaluator` -- a general smooth potential with gradient and
  Hessian; quadrature is limited to dimension <= 2 tensor grids.

All heavy integrals are done in the log domain: the integrand is multiplied
by ``exp(h - h_peak)`` where ``h`` is the log-density, so ``r^(n-1)`` never
overflows for large n.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .errors import NonIntegrable, QuadratureFailure, UnsupportedGeometry
from .quadrature import gauss_legendre_panels, integrate

Array = np.ndarray

# Log-density drop (natural units) beyond which an integration range is cut.
# e^{-80} ~ 1.8e-35 of the peak density, far below any tolerance used here.
_CUT_DROP = 80.0


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialEvaluator:
    """A potential V on R^dim with gradient and Hessian.

    Callables are vectorized: ``value`` maps points of shape ``(m, dim)`` to
    ``(m,)``, ``gradient`` to ``(m, dim)`` and ``hessian`` to ``(m, dim, dim)``.
    """

    dim: int
    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]
    hessian: Callable[[Array], Array]
    label: str = "evaluator"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")

    def V(self, x) -> Array:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.value(pts), dtype=float).reshape(pts.shape[0])

    def grad(self, x) -> Array:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.gradient(pts), dtype=float).reshape(pts.shape[0], self.dim)

    def hess(self, x) -> Array:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.hessian(pts), dtype=float).reshape(pts.shape[0], self.dim, self.dim)


@dataclass(frozen=True)
class PowerLawFamily:
    """Parameters of the exponential power family and its perturbations.

    ``branch`` is ``"pure"`` (W = r^alpha/alpha everywhere), ``"prop71"``
    (alpha >= 2: pure inside R_a, quadratic continuation with curvature
    c (a n)^{1-2/alpha} outside) or ``"prop72"`` (1 < alpha <= 2: C^1 quadratic
    inside R_a, pure outside).
    """

    alpha: float
    a: float = 1.0
    c: float = 1.0
    branch: str = "pure"

    def __post_init__(self):
        if self.branch not in ("pure", "prop71", "prop72"):
            raise ValueError(f"unknown power-law branch {self.branch!r}")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if not 0 < self.c <= 1:
            raise ValueError("c must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class RadialMeasure:
    """Radial measure ``exp(-W(|x|)) dx`` on R^dim."""

    dim: int
    profile: Callable[[Array], Array]
    profile_deriv: Callable[[Array], Array]
    profile_second: Callable[[Array], Array] | None = None
    family: PowerLawFamily | None = None
    breakpoints: tuple[float, ...] = ()
    label: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")

    @property
    def is_power_law(self) -> bool:
        return self.family is not None

    def W(self, r):
        return np.asarray(self.profile(np.asarray(r, dtype=float)), dtype=float)

    def dW(self, r):
        return np.asarray(self.profile_deriv(np.asarray(r, dtype=float)), dtype=float)

    def d2W(self, r):
        r = np.asarray(r, dtype=float)
        if self.profile_second is not None:
            return np.asarray(self.profile_second(r), dtype=float)
        step = 1e-5 * (1.0 + np.abs(r))
        return (self.dW(r + step) - self.dW(np.maximum(r - step, 0.0))) / (
            r + step - np.maximum(r - step, 0.0)
        )

    def log_density(self, r):
        """``(n-1) log r - W(r)``: log of the radial density."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            logr = np.log(r) if self.dim > 1 else np.zeros_like(r)
        return (self.dim - 1) * logr - self.W(r)

    def evaluator(self) -> PotentialEvaluator:
        """Cartesian view V(x) = W(|x|) with gradient and Hessian."""
        n = self.dim

        def value(x):
            return self.W(np.linalg.norm(x, axis=-1))

        def gradient(x):
            r = np.linalg.norm(x, axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                g = (self.dW(r) / r)[:, None] * x
            return np.where(r[:, None] > 0, g, 0.0)

        def hessian(x):
            r = np.linalg.norm(x, axis=-1)
            safe = np.where(r > 0, r, 1.0)
            u = x / safe[:, None]
            d2 = self.d2W(r)
            with np.errstate(invalid="ignore", divide="ignore"):
                tang = np.where(r > 0, self.dW(r) / safe, d2)
            outer = u[:, :, None] * u[:, None, :]
            eye = np.eye(n)[None]
            return d2[:, None, None] * outer + tang[:, None, None] * (eye - outer)

        return PotentialEvaluator(n, value, gradient, hessian, label=f"{self.label}(cartesian)")


def _power_law_profile(fam: PowerLawFamily, n: int):
    alpha = fam.alpha
    R = (fam.a * n) ** (1.0 / alpha)

    def pure(r):
        return r**alpha / alpha

    def pure_d(r):
        return r ** (alpha - 1.0)

    def pure_dd(r):
        with np.errstate(divide="ignore"):
            return (alpha - 1.0) * r ** (alpha - 2.0)

    if fam.branch == "pure":
        return pure, pure_d, pure_dd, ()
    if fam.branch == "prop71":
        kappa = fam.c * (fam.a * n) ** ((alpha - 2.0) / alpha)
        WR, dWR = R**alpha / alpha, R ** (alpha - 1.0)

        def W(r):
            s = np.maximum(r - R, 0.0)
            return np.where(r <= R, pure(np.minimum(r, R)), WR + dWR * s + 0.5 * kappa * s * s)

        def dW(r):
            return np.where(r <= R, pure_d(np.minimum(r, R)), dWR + kappa * (r - R))

        def d2W(r):
            return np.where(r <= R, pure_dd(np.minimum(r, R)), kappa)

        return W, dW, d2W, (R,)
    # prop72: C^1 quadratic inside the ball, pure outside.
    kappa = R ** (alpha - 2.0)
    shift = R**alpha / alpha - 0.5 * kappa * R * R

    def W(r):
        return np.where(r <= R, shift + 0.5 * kappa * r * r, pure(np.maximum(r, R)))

    def dW(r):
        return np.where(r <= R, kappa * r, pure_d(np.maximum(r, R)))

    def d2W(r):
        return np.where(r <= R, kappa, pure_dd(np.maximum(r, R)))

    return W, dW, d2W, (R,)


def power_law_measure(alpha: float, dim: int, a: float = 1.0, c: float = 1.0, branch: str = "pure") -> RadialMeasure:
    """Exponential power measure exp(-|x|^alpha/alpha), optionally perturbed."""
    fam = PowerLawFamily(float(alpha), float(a), float(c), branch)
    if branch == "prop71" and alpha < 2:
        raise ValueError("prop71 branch requires alpha >= 2")
    if branch == "prop72" and not 1 < alpha <= 2:
        raise ValueError("prop72 branch requires 1 < alpha <= 2")
    W, dW, d2W, breaks = _power_law_profile(fam, dim)
    label = f"power_law(alpha={alpha:g}, a={a:g}, c={c:g}, {branch})"
    return RadialMeasure(dim, W, dW, d2W, fam, breaks, label)


def gaussian(dim: int) -> RadialMeasure:
    return power_law_measure(2.0, dim)


def radial_measure(dim: int, W, dW, d2W=None, breakpoints=(), label: str = "custom") -> RadialMeasure:
    return RadialMeasure(dim, W, dW, d2W, None, tuple(breakpoints), label)


MeasureSpec = Union[RadialMeasure, PotentialEvaluator]


# --------------------------------------------------------------------------
# Cells
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    radius: float
    dim: int = 1
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            if len(self.center) != self.dim:
                raise ValueError("center has wrong dimension")

    @property
    def centered(self) -> bool:
        return self.center is None or not any(self.center)

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.dim) if self.center is None else np.asarray(self.center)

    def contains(self, pts: Array) -> Array:
        return np.linalg.norm(np.atleast_2d(pts) - self.origin, axis=-1) <= self.radius


@dataclass(frozen=True)
class BallComplement:
    radius: float
    dim: int = 1

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def contains(self, pts: Array) -> Array:
        return np.linalg.norm(np.atleast_2d(pts), axis=-1) > self.radius


@dataclass(frozen=True)
class Annulus:
    r_in: float
    r_out: float
    dim: int = 1

    def __post_init__(self):
        if not 0 <= self.r_in < self.r_out:
            raise ValueError("annulus needs 0 <= r_in < r_out")

    def contains(self, pts: Array) -> Array:
        r = np.linalg.norm(np.atleast_2d(pts), axis=-1)
        return (r >= self.r_in) & (r <= self.r_out)


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ValueError("box corners differ in dimension")
        if any(l > h for l, h in zip(lo, hi)):
            raise ValueError("box needs lo <= hi componentwise")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts: Array) -> Array:
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=-1)


Cell = Union[Ball, BallComplement, Annulus, Box]


def full_space(dim: int) -> Ball:
    return Ball(math.inf, dim)


def radial_range(cell: Cell) -> tuple[float, float] | None:
    """Radial interval of a rotation-invariant cell, or None."""
    if isinstance(cell, Ball):
        return (0.0, cell.radius) if cell.centered else None
    if isinstance(cell, BallComplement):
        return (cell.radius, math.inf)
    if isinstance(cell, Annulus):
        return (cell.r_in, cell.r_out)
    return None


def radial_extent(cell: Cell) -> tuple[float, float]:
    """(min |x|, max |x|) over the cell."""
    rr = radial_range(cell)
    if rr is not None:
        return rr
    if isinstance(cell, Ball):
        d = float(np.linalg.norm(cell.origin))
        return max(0.0, d - cell.radius), d + cell.radius
    lo, hi = np.asarray(cell.lo), np.asarray(cell.hi)
    nearest = np.clip(0.0, lo, hi)
    farthest = np.where(np.abs(lo) > np.abs(hi), lo, hi)
    return float(np.linalg.norm(nearest)), float(np.linalg.norm(farthest))


def _interval_of(cell: Cell) -> tuple[float, float]:
    """A 1-D cell as an interval of the real line."""
    if isinstance(cell, Box):
        return cell.lo[0], cell.hi[0]
    if isinstance(cell, Ball):
        c = float(cell.origin[0])
        return c - cell.radius, c + cell.radius
    raise UnsupportedGeometry(f"{type(cell).__name__} is not an interval")


# --------------------------------------------------------------------------
# One-dimensional log-density support
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Support:
    a: float
    b: float
    peak: float
    h_peak: float
    points: tuple[float, ...]


def _march(h, start: float, direction: float, drop: float) -> float:
    x, step = start, 1.0
    best = float(h(np.array([x]))[0])
    prev = best
    for _ in range(400):
        x = start + direction * step
        if abs(x) > 1e150:
            break
        val = float(h(np.array([x]))[0])
        if np.isfinite(val):
            best = max(best, val)
            if val < best - drop - 10.0 and val < prev:
                return x
            prev = val
        step *= 2.0
    raise NonIntegrable("density does not decay: the measure has infinite mass")


def _support(h, lo: float, hi: float, breaks=(), drop: float = _CUT_DROP) -> _Support:
    """Locate the mass of exp(h) on [lo, hi]; infinite ends are truncated."""
    L = lo if np.isfinite(lo) else _march(h, min(hi, 0.0) if np.isfinite(hi) else 0.0, -1.0, drop)
    U = hi if np.isfinite(hi) else _march(h, max(lo, 0.0) if np.isfinite(lo) else 0.0, 1.0, drop)
    xs = np.linspace(L, U, 4097)
    if L >= 0 and U > 0:
        xs = np.union1d(xs, L + np.geomspace(max(U - L, 1e-300) * 1e-12, U - L, 1024))
    with np.errstate(all="ignore"):
        hs = np.asarray(h(xs), dtype=float)
    hs = np.where(np.isfinite(hs), hs, -np.inf)
    if not np.isfinite(hs).any():
        raise QuadratureFailure("log-density is not finite anywhere on the cell")
    i = int(np.argmax(hs))
    peak, hp = float(xs[i]), float(hs[i])
    if 0 < i < len(xs) - 1:
        res = optimize.minimize_scalar(
            lambda t: -float(h(np.array([t]))[0]),
            bounds=(xs[i - 1], xs[i + 1]),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, abs(xs[i]))},
        )
        if -res.fun > hp:
            peak, hp = float(res.x), float(-res.fun)
    target = hp - drop

    def crossing(x0, x1):
        return optimize.brentq(lambda t: float(h(np.array([t]))[0]) - target, x0, x1,
                               xtol=1e-13 * max(1.0, abs(x0), abs(x1)))

    above = np.nonzero(hs >= target)[0]
    first, last = int(above[0]), int(above[-1])
    a, b = float(L), float(U)
    if first > 0:
        a = crossing(xs[first - 1], xs[first]) if np.isfinite(hs[first - 1]) else float(xs[first - 1])
    if last < len(xs) - 1:
        b = crossing(xs[last], xs[last + 1]) if np.isfinite(hs[last + 1]) else float(xs[last + 1])
    # Curvature scale at the peak sets the initial panel layout.
    step = 1e-4 * max(b - a, 1e-12)
    probe = np.array([peak - step, peak, peak + step])
    with np.errstate(all="ignore"):
        hv = np.asarray(h(probe), dtype=float)
    curv = -(hv[0] - 2 * hv[1] + hv[2]) / step**2 if np.all(np.isfinite(hv)) else 0.0
    width = 1.0 / math.sqrt(curv) if curv > 0 else (b - a) / 8
    width = min(max(width, (b - a) * 1e-6), b - a)
    pts = {peak, *[float(p) for p in breaks]}
    for k in range(7):
        pts.update((peak - width * 2**k, peak + width * 2**k))
    pts = tuple(sorted(p for p in pts if a < p < b))
    return _Support(float(a), float(b), peak, hp, pts)


def _log_integral(f, h, sup: _Support, rtol: float = 1e-12):
    """log of integral of exp(h) (f=None) or integral of f exp(h - h_peak)."""
    hp = sup.h_peak

    def weight(x):
        with np.errstate(all="ignore"):
            w = np.exp(np.asarray(h(x), dtype=float) - hp)
        return np.where(np.isfinite(w), w, 0.0)

    if f is None:
        res = integrate(weight, sup.a, sup.b, rtol=rtol, points=sup.points)
    else:
        def integrand(x):
            w = weight(x)
            v = np.asarray(f(x), dtype=float)
            v = np.broadcast_to(v, (x.shape[0],) + v.shape[1:]) if v.ndim else np.full(x.shape[0], float(v))
            return v * (w[:, None] if v.ndim == 2 else w)

        res = integrate(integrand, sup.a, sup.b, rtol=rtol, points=sup.points)
    return res


@functools.lru_cache(maxsize=512)
def _radial_support(measure: RadialMeasure, lo: float, hi: float) -> _Support:
    return _support(measure.log_density, lo, hi, measure.breakpoints)


@functools.lru_cache(maxsize=512)
def _line_support(ev: PotentialEvaluator, lo: float, hi: float) -> _Support:
    return _support(lambda x: -ev.V(np.asarray(x)[:, None]), lo, hi)


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizedMeasure:
    """A measure together with log Z and a certified truncation radius."""

    base: MeasureSpec
    log_Z: float
    tail_radius: float
    eps_tail: float
    tail_certified: bool = True

    @property
    def dim(self) -> int:
        return self.base.dim


def _unwrap(measure) -> MeasureSpec:
    return measure.base if isinstance(measure, NormalizedMeasure) else measure


def log_sphere_area(n: int) -> float:
    """log of the (n-1)-sphere surface area; 2 points for n = 1."""
    return math.log(2.0) + 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n))


def _radial_log_mass(measure: RadialMeasure, lo: float = 0.0, hi: float = math.inf) -> tuple[float, bool]:
    sup = _radial_support(measure, lo, hi)
    res = _log_integral(None, measure.log_density, sup)
    if res.value <= 0:
        raise QuadratureFailure("radial mass integral vanished")
    return math.log(res.value) + sup.h_peak, res.converged


def _radial_tail_radius(measure: RadialMeasure, log_mass: float, eps: float) -> tuple[float, bool]:
    """Smallest R with the integration-by-parts majorant of the tail below eps.

    For h = log density concave beyond R with h'(R) < 0,
    int_R^inf e^h <= e^{h(R)} / (-h'(R)).
    """
    n = measure.dim
    sup = _radial_support(measure, 0.0, math.inf)

    def dh(r):
        return (n - 1) / r - float(measure.dW(np.array([r]))[0])

    def log_major(r):
        slope = dh(r)
        if slope >= 0:
            return math.inf
        return float(measure.log_density(np.array([r]))[0]) - math.log(-slope)

    target = math.log(eps) + log_mass
    lo = max(sup.peak, 1e-12) * (1 + 1e-9) + 1e-12
    hi = max(2 * lo, sup.b)
    for _ in range(200):
        if log_major(hi) < target:
            break
        hi *= 2
    else:
        raise NonIntegrable("tail majorant never drops below the requested mass")
    if log_major(lo) < target:
        hi = lo
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if log_major(mid) < target:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-12 * hi:
                break
    # Concavity of h beyond R is what makes the majorant valid.
    if measure.is_power_law and measure.family.alpha >= 1:
        certified = True
    else:
        rs = np.geomspace(hi, 64 * hi, 512)
        certified = bool(np.all(measure.d2W(rs) >= -(n - 1) / rs**2 - 1e-10))
    return hi, certified


def _box_log_mass(ev: PotentialEvaluator, lo, hi, panels: int) -> float:
    axes = [gauss_legendre_panels(l, h, panels) for l, h in zip(lo, hi)]
    if ev.dim == 1:
        pts = axes[0][0][:, None]
        wts = axes[0][1]
    else:
        X, Y = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        wts = np.outer(axes[0][1], axes[1][1]).ravel()
    logw = -ev.V(pts)
    m = float(np.max(logw))
    return m + math.log(float(np.sum(wts * np.exp(logw - m))))


def normalize(measure: MeasureSpec, eps_tail: float = 1e-12) -> NormalizedMeasure:
    """Compute log Z and a tail radius beyond which the mass is below eps_tail * Z."""
    if not 0 < eps_tail <= 1e-6:
        raise ValueError("eps_tail must lie in (0, 1e-6]")
    measure = _unwrap(measure)
    if isinstance(measure, RadialMeasure):
        log_mass, ok = _radial_log_mass(measure)
        if not ok:
            raise QuadratureFailure("radial normalization did not converge")
        radius, certified = _radial_tail_radius(measure, log_mass, eps_tail)
        return NormalizedMeasure(measure, log_sphere_area(measure.dim) + log_mass, radius, eps_tail, certified)
    if measure.dim == 1:
        sup = _line_support(measure, -math.inf, math.inf)
        res = _log_integral(None, lambda x: -measure.V(x[:, None]), sup)
        if not res.converged:
            raise QuadratureFailure("normalization did not converge")
        radius = max(abs(sup.a), abs(sup.b))
        return NormalizedMeasure(measure, math.log(res.value) + sup.h_peak, radius, eps_tail, False)
    if measure.dim == 2:
        half, previous = 1.0, None
        for _ in range(60):
            current = _box_log_mass(measure, (-half, -half), (half, half), 64)
            if previous is not None and abs(current - previous) < eps_tail:
                refined = _box_log_mass(measure, (-half, -half), (half, half), 128)
                return NormalizedMeasure(measure, refined, half * math.sqrt(2.0), eps_tail, False)
            previous = current
            half *= 2.0
        raise NonIntegrable("box mass keeps growing under doubling")
    raise UnsupportedGeometry("non-radial normalization is limited to dim <= 2")


# --------------------------------------------------------------------------
# Cell averages
# --------------------------------------------------------------------------


def _is_radial_field(f) -> bool:
    return bool(getattr(f, "radial", False))


def _field_on_points(f, pts: Array) -> Array:
    if _is_radial_field(f):
        return np.asarray(f(np.linalg.norm(pts, axis=-1)), dtype=float)
    v = np.asarray(f(pts), dtype=float)
    if v.ndim == 0:
        return np.full(pts.shape[0], float(v))
    return v


@dataclass(frozen=True)
class CellAverage:
    value: Array | float
    log_mass: float
    converged: bool


def _radial_average(f, measure: RadialMeasure, lo: float, hi: float, rtol: float) -> CellAverage:
    sup = _radial_support(measure, lo, hi)
    den = _log_integral(None, measure.log_density, sup, rtol)
    num = _log_integral(f, measure.log_density, sup, rtol) if f is not None else den
    value = np.asarray(num.value) / den.value
    return CellAverage(value if np.ndim(value) else float(value), math.log(den.value) + sup.h_peak,
                       bool(num.converged and den.converged))


def _line_average(f, ev: PotentialEvaluator, lo: float, hi: float, rtol: float) -> CellAverage:
    sup = _line_support(ev, lo, hi)

    def h(x):
        return -ev.V(np.asarray(x)[:, None])

    den = _log_integral(None, h, sup, rtol)
    if f is None:
        num = den
    else:
        num = _log_integral(lambda x: _field_on_points(f, x[:, None]), h, sup, rtol)
    value = np.asarray(num.value) / den.value
    return CellAverage(value if np.ndim(value) else float(value), math.log(den.value) + sup.h_peak,
                       bool(num.converged and den.converged))


def _plane_rule(ev: PotentialEvaluator, cell: Cell, panels: int):
    if isinstance(cell, Box):
        (x, wx), (y, wy) = (gauss_legendre_panels(l, h, panels) for l, h in zip(cell.lo, cell.hi))
        X, Y = np.meshgrid(x, y, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1), np.outer(wx, wy).ravel()
    if isinstance(cell, Ball):
        r, wr = gauss_legendre_panels(0.0, cell.radius, panels)
        m = 16 * panels
        theta = 2 * np.pi * np.arange(m) / m
        Rg, Tg = np.meshgrid(r, theta, indexing="ij")
        pts = np.stack([Rg.ravel() * np.cos(Tg.ravel()), Rg.ravel() * np.sin(Tg.ravel())], axis=1)
        return pts + cell.origin, np.outer(wr * r, np.full(m, 2 * np.pi / m)).ravel()
    raise UnsupportedGeometry(f"planar quadrature does not handle {type(cell).__name__}")


def _plane_average(f, ev: PotentialEvaluator, cell: Cell, rtol: float) -> CellAverage:
    if isinstance(cell, Ball) and not np.isfinite(cell.radius):
        nm = normalize(ev)
        t = nm.tail_radius
        cell = Box((-t, -t), (t, t))
    previous, panels = None, 8
    while panels <= 256:
        pts, wts = _plane_rule(ev, cell, panels)
        logw = -ev.V(pts)
        shift = float(np.max(logw))
        w = wts * np.exp(logw - shift)
        den = float(np.sum(w))
        vals = np.ones(len(pts)) if f is None else _field_on_points(f, pts)
        num = np.tensordot(w, vals, axes=(0, 0))
        value = num / den
        current = (value, math.log(den) + shift)
        if previous is not None:
            scale = np.maximum(np.abs(value), 1e-300)
            if np.all(np.abs(value - previous[0]) <= max(rtol, 1e-9) * np.maximum(scale, 1.0)):
                return CellAverage(value if np.ndim(value) else float(value), current[1], True)
        previous = current
        panels *= 2
    value = previous[0]
    return CellAverage(value if np.ndim(value) else float(value), previous[1], False)


def cell_average(f, measure, cell: Cell, rtol: float = 1e-12) -> CellAverage:
    """Average of ``f`` over ``cell`` w.r.t. the measure conditioned on the cell.

    ``f`` may be ``None`` (mass only), a radial field (attribute ``radial``
    true, called with radii), or a cartesian callable on ``(m, dim)`` points.
    Vector-valued fields return one average per component.
    """
    base = _unwrap(measure)
    rr = radial_range(cell)
    if isinstance(base, RadialMeasure) and rr is not None and (f is None or _is_radial_field(f)):
        return _radial_average(f, base, rr[0], rr[1], rtol)
    ev = base.evaluator() if isinstance(base, RadialMeasure) else base
    if ev.dim == 1:
        if isinstance(cell, (BallComplement, Annulus)):
            raise UnsupportedGeometry("1-D complements are not intervals; use a radial field")
        lo, hi = _interval_of(cell)
        return _line_average(f, ev, lo, hi, rtol)
    if ev.dim == 2:
        if isinstance(cell, (BallComplement, Annulus)):
            raise UnsupportedGeometry("curved unbounded cells need a radial measure and field")
        return _plane_average(f, ev, cell, max(rtol, 1e-10))
    raise UnsupportedGeometry("non-radial quadrature is limited to dim <= 2")


def mean_over_cell(f, measure, cell: Cell) -> float:
    """(1/mu(cell)) * integral over the cell of f dmu."""
    res = cell_average(f, measure, cell)
    if not res.converged:
        raise QuadratureFailure("cell average did not converge")
    return res.value


class _Power:
    radial = True

    def __init__(self, gamma: float):
        self.gamma = gamma

    def __call__(self, r):
        with np.errstate(divide="ignore"):
            return np.asarray(r, dtype=float) ** self.gamma


def moment(measure, cell: Cell, gamma: float) -> float:
    """(1/mu(cell)) * integral over the cell of |x|^gamma dmu."""
    base = _unwrap(measure)
    if gamma <= -base.dim:
        raise ValueError("moment needs gamma > -n")
    if not isinstance(base, RadialMeasure) and not (isinstance(cell, Box) and base.dim <= 2):
        raise UnsupportedGeometry("moments of non-radial measures need a Box cell in dim <= 2")
    return mean_over_cell(_Power(gamma), measure, cell)


def cell_log_mass(measure, cell: Cell) -> float:
    """log of the unnormalized mass of the cell (sphere area included)."""
    base = _unwrap(measure)
    res = cell_average(None, measure, cell)
    if isinstance(base, RadialMeasure) and radial_range(cell) is not None:
        return res.log_mass + log_sphere_area(base.dim)
    return res.log_mass


def cell_mass(measure: NormalizedMeasure, cell: Cell) -> float:
    """mu(cell) for a normalized measure."""
    return math.exp(cell_log_mass(measure, cell) - measure.log_Z)


def cell_sample(measure, cell: Cell, size: int = 4096) -> tuple[Array, Array]:
    """Deterministic weighted nodes (radii for radial cells, points otherwise).

    Weights sum to one; used for quantiles and probe sets, never for values
    that feed a certificate.
    """
    base = _unwrap(measure)
    rr = radial_range(cell)
    if isinstance(base, RadialMeasure) and rr is not None:
        sup = _radial_support(base, rr[0], rr[1])
        x, w = gauss_legendre_panels(sup.a, sup.b, max(size // 8, 1))
        logw = base.log_density(x)
        w = w * np.exp(np.where(np.isfinite(logw), logw - sup.h_peak, -np.inf))
        return x, w / w.sum()
    ev = base.evaluator() if isinstance(base, RadialMeasure) else base
    if ev.dim == 1:
        lo, hi = _interval_of(cell)
        sup = _line_support(ev, lo, hi)
        x, w = gauss_legendre_panels(sup.a, sup.b, max(size // 8, 1))
        pts = x[:, None]
    elif ev.dim == 2:
        if isinstance(cell, Ball) and not np.isfinite(cell.radius):
            t = normalize(ev).tail_radius
            cell = Box((-t, -t), (t, t))
        pts, w = _plane_rule(ev, cell, max(int(math.sqrt(size) // 8), 2))
    else:
        raise UnsupportedGeometry("non-radial sampling is limited to dim <= 2")
    logw = -ev.V(pts)
    w = w * np.exp(logw - logw.max())
    return pts, w / w.sum()
