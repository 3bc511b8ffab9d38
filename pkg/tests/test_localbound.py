import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import quadratic_1d
from gapcert.curvature import curvature_field
from gapcert.errors import (
    EmptyFeasibleGrid,
    NoApplicableMethod,
    PreconditionError,
    UnboundedPotential,
    UncertifiedInfimum,
)
from gapcert.fields import ScalarField
from gapcert.localbound import (
    LocalBoundConfig,
    best_local_bound,
    bound_capped_ratio,
    bound_constant_floor,
    bound_half_min,
    bound_shifted_k,
    bound_signed_kappa,
    default_k_grid,
    harmonic_pair,
)
from gapcert.measures import Annulus, Ball, BallComplement, Box, gaussian, power_law_measure
from gapcert.oracle import schrodinger_ground_energy
from gapcert.poincare import PoincareEstimate, bobkov_1d_lower, bobkov_estimate


def lam(v):
    return PoincareEstimate(v, True, "user_constant")


def radial_mean(f, W, n, lo, hi):
    """Independent reference average over a radial shell via scipy quad."""
    w = lambda r: r ** (n - 1) * math.exp(-W(r))  # noqa: E731
    num = quad(lambda r: f(r) * w(r), lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    return num / quad(w, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]


TWO = ScalarField.constant(2.0)
ZERO = ScalarField.constant(0.0)
R_SQ = ScalarField.radial_monotone(lambda r: np.asarray(r) ** 2, +1, "r^2")
G3 = gaussian(3)
UNIT = Ball(1.0, 3)


# --- arithmetic examples -----------------------------------------------------


def test_constant_floor_examples():
    assert bound_constant_floor(TWO, UNIT).value == 2.0
    rep = bound_constant_floor(R_SQ, BallComplement(3.0, 3))
    assert rep.value == pytest.approx(9.0) and rep.certified


def test_constant_floor_power_law_complement():
    # U = min(1, alpha-1) r^(alpha-2) is decreasing for alpha = 1.5, so the
    # infimum over the complement is the limit 0, not the boundary value.
    alpha, n = 1.5, 8
    U = ScalarField.radial_monotone(lambda r: 0.5 * np.asarray(r) ** (alpha - 2), -1)
    R = n ** (1 / alpha)
    assert bound_constant_floor(U, BallComplement(R, n)).value == 0.0
    assert U(np.array([R]))[0] == pytest.approx(0.5 * n ** ((alpha - 2) / alpha))
    assert bound_constant_floor(U, Ball(R, n)).value == pytest.approx(0.25)


def test_constant_floor_refuses_sampled_infimum():
    U = ScalarField(lambda r: np.cos(np.asarray(r)) + 2, radial=True)
    with pytest.raises(UncertifiedInfimum):
        bound_constant_floor(U, UNIT)


def test_capped_ratio_examples():
    assert bound_capped_ratio(TWO, UNIT, lam(1.0), G3).value == pytest.approx(0.4, rel=1e-12)
    assert bound_capped_ratio(ZERO, UNIT, lam(1.0), G3).value == 0.0
    one = ScalarField.constant(1.0)
    assert bound_capped_ratio(one, UNIT, lam(2.0), G3).value == pytest.approx(0.5, rel=1e-12)


def test_capped_ratio_unbounded():
    with pytest.raises(UnboundedPotential):
        bound_capped_ratio(R_SQ, BallComplement(1.0, 3), lam(1.0), G3)


def test_half_min_examples():
    assert bound_half_min(TWO, UNIT, lam(1.0), G3).value == pytest.approx(0.25, rel=1e-12)
    assert bound_half_min(ZERO, UNIT, lam(1.0), G3).value == 0.0


def test_half_min_matches_independent_quadrature():
    ref = 0.5 * radial_mean(lambda r: min(0.5, r * r), lambda r: r * r / 2, 3, 0.0, 1.5)
    assert bound_half_min(R_SQ, Ball(1.5, 3), lam(1.0), G3).value == pytest.approx(ref, rel=1e-9)


def test_negative_potential_refused():
    neg = ScalarField.constant(-0.1)
    for fn in (bound_half_min, bound_capped_ratio):
        with pytest.raises(PreconditionError):
            fn(neg, UNIT, lam(1.0), G3)


def test_shifted_k_examples():
    rep = bound_shifted_k(TWO, UNIT, lam(1.0), G3, [0.0, 2.0])
    assert rep.value == pytest.approx(2.0) and rep.k_used == 2.0
    assert bound_shifted_k(ZERO, UNIT, lam(1.0), G3, [0.0]).value == 0.0
    with pytest.raises(EmptyFeasibleGrid):
        bound_shifted_k(ZERO, UNIT, lam(1.0), G3, [0.5])


def test_shifted_k_annulus_prefers_shift():
    cell = Annulus(1.0, 2.0, 2)
    W = lambda r: r * r / 2  # noqa: E731
    rep = bound_shifted_k(R_SQ, cell, lam(1.0), gaussian(2), [0.0, 1.0])
    k0 = 0.5 * radial_mean(lambda r: min(0.5, r * r), W, 2, 1.0, 2.0)
    k1 = 1.0 + 0.5 * radial_mean(lambda r: min(0.5, r * r - 1), W, 2, 1.0, 2.0)
    assert k1 > k0
    assert rep.k_used == 1.0 and rep.value == pytest.approx(k1, rel=1e-9)


def test_signed_kappa_constant_negative():
    # The negative part enters with weight 1/kappa and no factor 1/2: -0.1/0.5.
    rep = bound_signed_kappa(ScalarField.constant(-0.1), UNIT, lam(1.0), G3, [0.5], [0.0])
    assert rep.value == pytest.approx(-0.2) and rep.kappa_used == 0.5
    assert rep.value <= -0.1  # exact bottom of the spectrum for U = -0.1


def test_signed_kappa_sound_on_dip():
    """U dips below the shift k on part of a short interval.

    Halving the negative part as well would give about 0.124 here, above the
    cell mean of U, which bounds the ground energy through the constant trial
    function.
    """
    m = quadratic_1d()
    L = 0.4867684987640297
    cell = Box((-L,), (L,))
    U = ScalarField.lipschitz_1d(lambda x: 0.12 + 0.15 * np.sin(6 * x + 1.0), 0.9)
    p = bobkov_1d_lower(m, cell)
    from gapcert.measures import cell_average

    mean_u = cell_average(U, m, cell).value
    truth = schrodinger_ground_energy(m, cell, U)
    assert truth.value <= mean_u + 1e-9
    for kappa in (0.3, 0.6, 0.9):
        for k in (0.0, 0.05, 0.1, 0.15):
            try:
                rep = bound_signed_kappa(U, cell, p, m, [kappa], [k])
            except EmptyFeasibleGrid:
                continue
            assert rep.value <= truth.value + 3 * truth.error_estimate


def test_signed_kappa_infeasible():
    with pytest.raises(EmptyFeasibleGrid):
        bound_signed_kappa(ScalarField.constant(-0.3), UNIT, lam(1.0), G3, [0.5], [0.0])


def test_signed_kappa_argmax():
    U = ScalarField.radial_monotone(lambda r: np.asarray(r) ** 2 - 0.05, +1)
    rep = bound_signed_kappa(U, UNIT, lam(2.0), G3, [0.25, 0.5, 0.9], [0.0])
    assert rep.kappa_used == 0.9
    W = lambda r: r * r / 2  # noqa: E731
    ref = radial_mean(lambda r: 0.5 * min(1.0, max(r * r - 0.05, 0)) - max(0.05 - r * r, 0) / 0.9, W, 3, 0, 1)
    assert rep.value == pytest.approx(ref, rel=1e-8)


# --- selector ----------------------------------------------------------------


def test_best_constant_two():
    rep = best_local_bound(TWO, UNIT, lam(1.0), G3)
    assert (rep.method, rep.value) == ("constant_floor", 2.0)


def test_best_zero_is_half_min():
    rep = best_local_bound(ZERO, UNIT, lam(1.0), G3)
    assert (rep.method, rep.value) == ("half_min", 0.0)


def test_best_without_poincare_constant():
    assert best_local_bound(TWO, UNIT, None, G3).method == "constant_floor"
    U = ScalarField(lambda r: np.cos(np.asarray(r)) + 2, radial=True)
    with pytest.raises(NoApplicableMethod):
        best_local_bound(U, UNIT, None, G3)


def test_best_respects_methods_enabled():
    cfg = LocalBoundConfig(methods_enabled=("capped_ratio",))
    assert best_local_bound(TWO, UNIT, lam(1.0), G3, cfg).method == "capped_ratio"
    with pytest.raises(ValueError):
        LocalBoundConfig(methods_enabled=("nope",))
    with pytest.raises(ValueError):
        LocalBoundConfig(kappa_grid=(1.0,))


def test_mu4_ball_n16():
    n = 16
    m = power_law_measure(4.0, n)
    rho = curvature_field(m)
    cell = Ball(n ** 0.25, n)
    p = bobkov_estimate(m, cell)
    # For n >= 2, rho = min(W'', W'/r) = r^2.
    mean_rho = radial_mean(lambda r: r * r, lambda r: r**4 / 4, n, 0, n ** 0.25)
    half = bound_half_min(rho, cell, p, m)
    ref = 0.5 * radial_mean(lambda r: min(p.lambda1 / 2, r * r), lambda r: r**4 / 4, n, 0, n ** 0.25)
    assert half.value == pytest.approx(ref, rel=1e-8)
    best = best_local_bound(rho, cell, p, m, LocalBoundConfig(k_grid=(0.0,)))
    assert best.value >= max(half.value, mean_rho / 8)
    assert best.certified


# --- properties ----------------------------------------------------------------


def test_harmonic_chain(rng):
    a = rng.uniform(1e-6, 1e3, 10_000)
    b = rng.uniform(1e-6, 1e3, 10_000)
    h = harmonic_pair(a, b)
    assert np.all(0.5 * np.minimum(a, b) <= h) and np.all(h <= np.minimum(a, b))


@pytest.mark.parametrize("alpha", [1.5, 3.0, 4.0])
def test_dominance_and_reduction(alpha):
    n = 6
    m = power_law_measure(alpha, n)
    cell = Ball(n ** (1 / alpha), n)
    rho = curvature_field(m)
    p = bobkov_estimate(m, cell)
    half = bound_half_min(rho, cell, p, m).value
    ks = default_k_grid(rho, cell, m)
    assert 0.0 in ks
    assert bound_shifted_k(rho, cell, p, m, ks).value >= half - 1e-15
    for kappa in (0.1, 0.5, 0.9):
        assert bound_signed_kappa(rho, cell, p, m, [kappa], [0.0]).value == pytest.approx(half, abs=1e-12)
    if alpha < 2:
        # rho ~ r^(alpha-2) blows up at the origin.
        with pytest.raises(UnboundedPotential):
            bound_capped_ratio(rho, cell, p, m)
        return
    assert bound_capped_ratio(rho, cell, p, m).value <= radial_mean(
        lambda r: float(rho(np.array([r]))[0]), lambda r: r**alpha / alpha, n, 0, n ** (1 / alpha))


@pytest.mark.parametrize("alpha", [3.0, 4.0])
@pytest.mark.parametrize("n", [4, 8])
def test_soundness_radial(alpha, n):
    m = power_law_measure(alpha, n)
    cell = Ball(n ** (1 / alpha), n)
    rho = curvature_field(m)
    p = bobkov_estimate(m, cell)
    truth = schrodinger_ground_energy(m, cell, rho)
    slack = truth.value + 3 * truth.error_estimate
    for rep in (bound_capped_ratio(rho, cell, p, m), bound_half_min(rho, cell, p, m),
                bound_shifted_k(rho, cell, p, m), bound_signed_kappa(rho, cell, p, m),
                best_local_bound(rho, cell, p, m)):
        assert rep.value <= slack, rep.method


def test_soundness_one_dimensional_cartesian():
    m = quadratic_1d()
    cell = Box((-1.5,), (1.5,))
    U = ScalarField.lipschitz_1d(lambda x: 1.0 + np.sin(3 * x), 3.0)
    p = bobkov_1d_lower(m, cell)
    assert p.certified
    truth = schrodinger_ground_energy(m, cell, U)
    rep = best_local_bound(U, cell, p, m)
    assert rep.certified
    assert 0 <= rep.value <= truth.value + 3 * truth.error_estimate
