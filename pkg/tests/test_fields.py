import numpy as np
import pytest

from gapcert.fields import ScalarField
from gapcert.measures import Annulus, Ball, BallComplement, Box, full_space


def test_monotone_extrema_exact():
    f = ScalarField.radial_monotone(lambda r: r * r, trend=1)
    e = f.extrema(BallComplement(3.0, 4))
    assert e.certified and e.inf == 9.0 and e.sup == np.inf
    e = f.extrema(Annulus(1.0, 2.0, 4))
    assert (e.inf, e.sup) == (1.0, 4.0)


def test_decreasing_profile_on_complement_tends_to_zero():
    f = ScalarField.radial_monotone(lambda r: 0.5 * r ** -0.5, trend=-1)
    e = f.extrema(BallComplement(4.0, 8))
    assert e.certified
    assert e.inf == 0.0
    assert e.sup == pytest.approx(0.25)


def test_lipschitz_enclosure_brackets_true_extrema():
    f = ScalarField.lipschitz_1d(lambda x: np.sin(3 * x), 3.0)
    e = f.extrema(Box((-1.0,), (1.0,)))
    assert e.certified
    assert e.inf <= -1.0 + 1e-12 and e.inf >= -1.0 - 1e-8
    assert e.sup >= 1.0 - 1e-12 and e.sup <= 1.0 + 1e-8


def test_sampled_extrema_not_certified():
    f = ScalarField(lambda x: x[:, 0] ** 2 + x[:, 1], name="plain")
    assert not f.extrema(Box((0.0, 0.0), (1.0, 1.0))).certified


def test_map_keeps_certification():
    f = ScalarField.radial_monotone(lambda r: r - 1.0, trend=1)
    g = f.map(lambda v: np.maximum(v, 0.0), monotone=1)
    e = g.extrema(Ball(3.0, 2))
    assert e.certified and e.inf == 0.0 and e.sup == 2.0
    h = f.map(lambda v: -v, monotone=-1)
    e = h.extrema(Ball(3.0, 2))
    assert (e.inf, e.sup) == (-2.0, 1.0)


def test_constant_field():
    e = ScalarField.constant(2.5).extrema(full_space(3))
    assert e.certified and e.inf == e.sup == 2.5
