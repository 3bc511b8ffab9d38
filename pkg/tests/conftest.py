import sys
import numpy as np
import pytest

from gapcert.measures import PotentialEvaluator


def quadratic_1d(scale=1.0):
    """V = x^2 / (2 scale^2) as a cartesian evaluator."""
    s2 = scale * scale
    return PotentialEvaluator(
        1,
        lambda x: x[:, 0] ** 2 / (2 * s2),
        lambda x: x / s2,
        lambda x: np.full((len(x), 1, 1), 1.0 / s2),
        label="quadratic",
    )


def flat(dim):
    """V = 0; only meaningful on bounded cells."""
    return PotentialEvaluator(
        dim,
        lambda x: np.zeros(len(x)),
        lambda x: np.zeros_like(x),
        lambda x: np.zeros((len(x), dim, dim)),
        label="flat",
    )


def gaussian_2d(scale=1.0):
    s2 = scale * scale
    return PotentialEvaluator(
        2,
        lambda x: (x**2).sum(axis=1) / (2 * s2),
        lambda x: x / s2,
        lambda x: np.broadcast_to(np.eye(2) / s2, (len(x), 2, 2)).copy(),
        label="gaussian2d",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
