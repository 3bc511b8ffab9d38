"""Exponential power family: radial integrals, Laplace ratios and dimension brackets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import xlogy

from .errors import BranchMismatch, QuadratureFailure
from .measures import RadialMeasure, _log_integral, _support, power_law_measure


@dataclass(frozen=True)
class PowerLawSpec:
    alpha: float
    a: float = 1.0
    c: float = 1.0
    n: int = 1
    branch: str = "pure"

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not 0 < self.c <= 1:
            raise ValueError("c must lie in (0, 1]")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.branch not in ("pure", "prop71", "prop72"):
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.branch == "prop71" and self.alpha < 2:
            raise BranchMismatch("prop71 requires alpha >= 2")
        if self.branch == "prop72" and not 1 < self.alpha <= 2:
            raise BranchMismatch("prop72 requires 1 < alpha <= 2")

    @property
    def R_a(self) -> float:
        return (self.a * self.n) ** (1.0 / self.alpha)

    @property
    def exponent(self) -> float:
        """1 - 2/alpha, written so that alpha = 2 gives exactly 0."""
        return (self.alpha - 2.0) / self.alpha

    def measure(self) -> RadialMeasure:
        return power_law_measure(self.alpha, int(self.n), self.a, self.c, self.branch)


def psi(u):
    """u - log u; minimal at u = 1."""
    u = np.asarray(u, dtype=float)
    return u - np.log(u)


def f_gamma(u, gamma: float, alpha: float):
    return np.asarray(u, dtype=float) ** (gamma / alpha)


# --------------------------------------------------------------------------
# I-integrals
# --------------------------------------------------------------------------


def _log_lower_gamma(s: float, lo: float, hi: float) -> float:
    """log of int_lo^hi y^(s-1) e^(-y) dy by adaptive quadrature."""
    if hi <= lo:
        return -math.inf
    if s >= 1:
        h = lambda y: xlogy(s - 1.0, y) - y  # noqa: E731
        a, b, shift = lo, hi, 0.0
    else:
        # t = y^s removes the endpoint singularity.
        h = lambda t: -(t ** (1.0 / s))  # noqa: E731
        a, b, shift = lo**s, (hi**s if math.isfinite(hi) else math.inf), -math.log(s)
    sup = _support(h, a, b)
    res = _log_integral(None, h, sup, rtol=1e-12)
    if not res.converged or not res.value > 0:
        raise QuadratureFailure(f"I-integral did not converge (s={s:g})")
    return math.log(res.value) + sup.h_peak + shift


def _check(alpha, n, gamma):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not gamma > -n:
        raise ValueError("gamma must exceed -n")


def i_integral_log(alpha: float, n: int, R: float, gamma: float) -> float:
    """log of int_0^R r^(gamma+n-1) exp(-r^alpha/alpha) dr."""
    _check(alpha, n, gamma)
    if not R > 0:
        raise ValueError("R must be positive")
    s = (gamma + n) / alpha
    Y = R**alpha / alpha if math.isfinite(R) else math.inf
    return (s - 1.0) * math.log(alpha) + _log_lower_gamma(s, 0.0, Y)


def itilde_integral_log(alpha: float, n: int, R: float, gamma: float) -> float:
    """log of the same integrand over [R, inf)."""
    _check(alpha, n, gamma)
    if not R >= 0:
        raise ValueError("R must be nonnegative")
    s = (gamma + n) / alpha
    return (s - 1.0) * math.log(alpha) + _log_lower_gamma(s, R**alpha / alpha, math.inf)


def i_integral(alpha: float, n: int, R: float, gamma: float) -> float:
    return math.exp(i_integral_log(alpha, n, R, gamma))


def itilde_integral(alpha: float, n: int, R: float, gamma: float) -> float:
    return math.exp(itilde_integral_log(alpha, n, R, gamma))


def laplace_ratio_asymptotic(alpha: float, a: float, gamma: float, tilde: bool = False) -> float:
    """Large-n limit of the normalized ratio: min(a,1)^(gamma/alpha), or max(a,1)^(gamma/alpha) over [R, inf)."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    base = max(a, 1.0) if tilde else min(a, 1.0)
    return float(base ** (gamma / alpha))


class MeanRho(NamedTuple):
    quadrature: float
    asymptotic: float


def mean_rho_ball(alpha: float, n: int, a: float) -> MeanRho:
    """Average of r^(alpha-2) over B(0, R_a) under the pure measure, with its asymptotic."""
    if not alpha >= 2:
        raise ValueError("mean_rho_ball needs alpha >= 2")
    gamma = alpha - 2.0
    R = (a * n) ** (1.0 / alpha)
    if gamma == 0:
        ratio = 1.0
    else:
        ratio = math.exp(i_integral_log(alpha, n, R, gamma) - i_integral_log(alpha, n, R, 0.0))
    asym = laplace_ratio_asymptotic(alpha, a, gamma) * n ** (gamma / alpha)
    return MeanRho(ratio, asym)


# --------------------------------------------------------------------------
# Dimension brackets
# --------------------------------------------------------------------------


def _spec(args, branch) -> PowerLawSpec:
    if len(args) == 1 and isinstance(args[0], PowerLawSpec):
        spec = args[0]
        if spec.branch != branch:
            raise BranchMismatch(f"spec has branch {spec.branch!r}, expected {branch!r}")
        return spec
    alpha, a, c, n = args
    return PowerLawSpec(float(alpha), float(a), float(c), int(n), branch)


def prop71_bracket(*args) -> float:
    """Dimension factor of the alpha >= 2 family; call with a spec or (alpha, a, c, n)."""
    s = _spec(args, "prop71")
    e = s.exponent
    if s.a <= 1:
        return min(1.0 / (4.0 * s.a), 0.5, s.c) * (s.a * s.n) ** e
    return min(0.25, s.c * s.a**e) * s.n**e


def prop72_bracket(*args) -> float:
    """Dimension factor of the 1 < alpha <= 2 family; call with a spec or (alpha, a, c, n)."""
    s = _spec(args, "prop72")
    e, m = s.exponent, s.alpha - 1.0
    if s.a >= 1:
        return min(1.0 / (4.0 * s.a), 0.5 * m, s.c * m) * (s.a * s.n) ** e
    return min(0.25, 0.5 * m, s.c * s.a**e * m) * s.n**e


def assemble_two_piece_bound(spec: PowerLawSpec, config=None):
    """Certified gap bound from the covering {B(0, R_a), complement}."""
    from .covering import BoundConfig, certify_covering, two_piece_covering

    covering = two_piece_covering(spec.R_a, int(spec.n))
    return certify_covering(spec.measure(), covering, config or BoundConfig())
