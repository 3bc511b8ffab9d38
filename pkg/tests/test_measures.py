import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate
from scipy.special import gammainc, gammaincc, gammaln

from conftest import gaussian_2d, quadratic_1d
from gapcert.errors import NonIntegrable, UnsupportedGeometry
from gapcert.measures import (
    Annulus,
    Ball,
    BallComplement,
    Box,
    cell_average,
    cell_mass,
    full_space,
    gaussian,
    mean_over_cell,
    moment,
    normalize,
    power_law_measure,
    radial_measure,
)


def closed_moment(alpha, n, gamma):
    """E|x|^gamma under exp(-|x|^alpha/alpha) on R^n."""
    return math.exp((gamma / alpha) * math.log(alpha) + gammaln((n + gamma) / alpha) - gammaln(n / alpha))


class _Radial:
    radial = True

    def __init__(self, f):
        self.f = f

    def __call__(self, r):
        return self.f(np.asarray(r, dtype=float))


# --- normalization ---------------------------------------------------------


def test_gaussian_1d_log_Z():
    assert normalize(gaussian(1)).log_Z == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)
    assert normalize(quadratic_1d()).log_Z == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-10)


def test_mu2_equals_gaussian():
    assert normalize(power_law_measure(2.0, 1)).log_Z == pytest.approx(math.log(math.sqrt(2 * math.pi)), abs=1e-12)


def test_mu1_dim3_Z():
    # 4 pi * Gamma(3)
    assert math.exp(normalize(power_law_measure(1.0, 3)).log_Z) == pytest.approx(8 * math.pi, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 5, 30, 200])
def test_gaussian_log_Z_any_dim(n):
    assert normalize(gaussian(n)).log_Z == pytest.approx(0.5 * n * math.log(2 * math.pi), rel=1e-11)


@pytest.mark.parametrize("n", [1, 3, 10])
def test_tail_radius_certifies_mass(n):
    eps = 1e-12
    nm = normalize(gaussian(n), eps)
    assert nm.tail_certified
    # P(|x| > R) for the standard Gaussian is Q(n/2, R^2/2).
    assert gammaincc(n / 2, nm.tail_radius**2 / 2) < eps
    assert cell_mass(nm, full_space(n)) == pytest.approx(1.0, abs=10 * eps)


def test_normalization_idempotent():
    m = power_law_measure(3.0, 7)
    first = normalize(m)
    assert normalize(first.base).log_Z == pytest.approx(first.log_Z, abs=1e-10)


def test_infinite_mass_detected():
    flat = radial_measure(1, lambda r: np.zeros_like(r), lambda r: np.zeros_like(r))
    with pytest.raises(NonIntegrable):
        normalize(flat)


# --- moments ---------------------------------------------------------------


def test_gaussian_second_moment():
    assert moment(gaussian(2), full_space(2), 2.0) == pytest.approx(2.0, rel=1e-10)


def test_mu1_second_moment():
    assert moment(power_law_measure(1.0, 3), full_space(3), 2.0) == pytest.approx(12.0, rel=1e-10)


def test_mu4_second_moment():
    assert moment(power_law_measure(4.0, 8), full_space(8), 2.0) == pytest.approx(2.6587, abs=1e-4)


@pytest.mark.parametrize("seed", range(12))
def test_moment_matches_gamma_ratio(seed):
    r = np.random.default_rng(seed)
    alpha, n, gamma = r.uniform(1.0, 5.0), int(r.integers(1, 60)), r.uniform(-0.5, 4.0)
    got = moment(power_law_measure(alpha, n), full_space(n), gamma)
    assert got == pytest.approx(closed_moment(alpha, n, gamma), rel=1e-8)


def test_ball_moment_matches_incomplete_gamma():
    # Gaussian n = 4 on B(0, 2): E|x|^2 = 2 P(3, 2) / P(2, 2) with regularized P.
    got = moment(gaussian(4), Ball(2.0, 4), 2.0)
    ref = 2 * math.gamma(3) * gammainc(3, 2.0) / (math.gamma(2) * gammainc(2, 2.0))
    assert got == pytest.approx(ref, rel=1e-10)


def test_moment_monotone_in_gamma_off_unit_ball():
    m = power_law_measure(1.5, 6)
    cell = BallComplement(1.0, 6)
    vals = [moment(m, cell, g) for g in (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


# --- averages --------------------------------------------------------------


def test_constant_mean():
    assert mean_over_cell(lambda x: np.full(len(x), 3.0), gaussian_2d(), Box((-1, -1), (2, 1))) == pytest.approx(3.0)
    assert mean_over_cell(_Radial(lambda r: 3.0 + 0 * r), power_law_measure(3.0, 5), Annulus(0.5, 2.0, 5)) == pytest.approx(3.0)


def test_min_with_zero_of_nonnegative_potential():
    m = gaussian(3)
    assert mean_over_cell(_Radial(lambda r: np.minimum(r * r / 2, 0.0)), m, full_space(3)) == 0.0


def test_mean_rho_mu4_ball_against_independent_quadrature():
    n = 20
    R = n ** 0.25
    m = power_law_measure(4.0, n)
    got = mean_over_cell(_Radial(lambda r: r * r), m, Ball(R, n))
    # Independent 1-D quadrature of both integrals, shifted by the log-density at R.
    h = lambda r: (n - 1) * math.log(r) - r**4 / 4 - ((n - 1) * math.log(R) - R**4 / 4)  # noqa: E731
    num, _ = sp_integrate.quad(lambda r: r * r * math.exp(h(r)), 0, R, epsrel=1e-12, limit=200)
    den, _ = sp_integrate.quad(lambda r: math.exp(h(r)), 0, R, epsrel=1e-12, limit=200)
    assert got == pytest.approx(num / den, rel=1e-9)


def test_mass_splitting():
    n, R = 8, 8 ** (1 / 3)
    m = normalize(power_law_measure(3.0, n))
    f = _Radial(lambda r: np.sin(r) + r)
    inside, outside = Ball(R, n), BallComplement(R, n)
    total = mean_over_cell(f, m, full_space(n))
    split = cell_mass(m, inside) * mean_over_cell(f, m, inside) + cell_mass(m, outside) * mean_over_cell(f, m, outside)
    assert split == pytest.approx(total, rel=1e-8)


def test_box_average_against_dblquad():
    ev = gaussian_2d(scale=0.7)
    box = Box((-1.0, -0.5), (2.0, 1.5))
    f = lambda x: x[:, 0] ** 2 + np.cos(x[:, 1])  # noqa: E731
    got = mean_over_cell(f, ev, box)
    w = lambda y, x: math.exp(-(x * x + y * y) / (2 * 0.49))  # noqa: E731
    num, _ = sp_integrate.dblquad(lambda y, x: (x * x + math.cos(y)) * w(y, x), -1, 2, -0.5, 1.5, epsrel=1e-12)
    den, _ = sp_integrate.dblquad(w, -1, 2, -0.5, 1.5, epsrel=1e-12)
    assert got == pytest.approx(num / den, rel=1e-8)


def test_line_average_against_quad():
    ev = quadratic_1d(scale=2.0)
    got = mean_over_cell(lambda x: np.abs(x[:, 0]) ** 3, ev, Box((-1.0,), (3.0,)))
    num, _ = sp_integrate.quad(lambda x: abs(x) ** 3 * math.exp(-x * x / 8), -1, 3, epsrel=1e-13)
    den, _ = sp_integrate.quad(lambda x: math.exp(-x * x / 8), -1, 3, epsrel=1e-13)
    assert got == pytest.approx(num / den, rel=1e-10)


def test_non_radial_curved_cell_rejected():
    with pytest.raises(UnsupportedGeometry):
        cell_average(lambda x: x[:, 0], gaussian_2d(), BallComplement(1.0, 2))


# --- evaluators and cells ----------------------------------------------------


@pytest.mark.parametrize("alpha,n", [(1.5, 3), (3.0, 4), (4.0, 2)])
def test_radial_evaluator_gradient_and_hessian(alpha, n, rng):
    ev = power_law_measure(alpha, n).evaluator()
    for _ in range(20):
        x = rng.normal(size=n) * 1.5
        h = 1e-5 * (1 + np.linalg.norm(x))
        fd = np.array([(ev.V(x + h * e) - ev.V(x - h * e))[0] / (2 * h) for e in np.eye(n)])
        g = ev.grad(x)[0]
        assert np.linalg.norm(fd - g) <= 1e-4 * max(np.linalg.norm(g), 1e-8)
        H = ev.hess(x)[0]
        assert np.allclose(H, H.T, rtol=0, atol=1e-12 * np.linalg.norm(H))


@pytest.mark.parametrize(
    "ctor",
    [lambda: Ball(0.0, 2), lambda: BallComplement(-1.0, 2), lambda: Annulus(2.0, 1.0, 2), lambda: Box((1.0,), (0.0,))],
)
def test_invalid_cells(ctor):
    with pytest.raises(ValueError):
        ctor()


def test_branch_profiles_are_c1():
    for branch, alpha in (("prop71", 3.0), ("prop72", 1.5)):
        m = power_law_measure(alpha, 6, a=0.7, c=0.5, branch=branch)
        R = m.breakpoints[0]
        for f in (m.W, m.dW):
            assert float(f(R - 1e-9)) == pytest.approx(float(f(R + 1e-9)), abs=1e-7)
