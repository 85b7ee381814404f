import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffsortkit.sigmoid import (
    SigmoidKind,
    SigmoidSpec,
    art,
    derivative,
    evaluate,
    relaxed_min_zero,
    unit_lipschitz_beta,
)

ALL_KINDS = list(SigmoidKind)


def reference(kind, beta, x, lam=0.25, eps=1e-10):
    """Textbook closed forms, written independently of the library."""
    if kind is SigmoidKind.LOGISTIC:
        return 1.0 / (1.0 + math.exp(-beta * x))
    if kind is SigmoidKind.LOGISTIC_ART:
        return 1.0 / (1.0 + math.exp(-beta * x / (abs(x) ** lam + eps)))
    if kind is SigmoidKind.RECIPROCAL:
        return 0.5 * 2 * beta * x / (1 + 2 * beta * abs(x)) + 0.5
    if kind is SigmoidKind.CAUCHY:
        return math.atan(beta * x) / math.pi + 0.5
    z = beta * x
    if z < -0.25:
        return -1.0 / (16 * z)
    if z > 0.25:
        return 1.0 - 1.0 / (16 * z)
    return z + 0.5


@pytest.mark.parametrize("kind,beta,x,expected", [
    ("logistic", 1.0, 0.0, 0.5),
    ("cauchy", 1.0, 1.0, 0.75),
    ("optimal", 1.0, 0.25, 0.75),
    ("reciprocal", 1.0, 0.5, 0.75),
])
def test_eval_examples(kind, beta, x, expected):
    assert evaluate(SigmoidSpec(kind, beta), x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_matches_closed_form(kind):
    rng = np.random.default_rng(1)
    for beta in (0.5, 3.0, 40.0):
        spec = SigmoidSpec(kind, beta)
        for x in rng.normal(scale=2.0, size=50):
            assert evaluate(spec, x) == pytest.approx(reference(kind, beta, x), rel=1e-12, abs=1e-15)


def test_deriv_examples():
    assert derivative(SigmoidSpec("logistic", 1.0), 0.0) == pytest.approx(0.25)
    assert derivative(SigmoidSpec("optimal", 1.0), 0.0) == 1.0


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_deriv_matches_central_difference_at_zero(kind):
    # with lambda > 0 the ART slope at 0 is 1/eps, far below what h = 1e-6 resolves
    spec = SigmoidSpec(kind, 1.0, art_lambda=0.0)
    # f_R' has a cusp at 0, so the central difference is off by 1 - 1/(1 + 2h); shrink h to stay under 1e-6
    h = 1e-7 if kind is SigmoidKind.RECIPROCAL else 1e-6
    fd = (reference(kind, 1.0, h, lam=0.0) - reference(kind, 1.0, -h, lam=0.0)) / (2 * h)
    assert abs(derivative(spec, 0.0) - fd) < 1e-6


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_deriv_matches_central_difference_away_from_kinks(kind):
    rng = np.random.default_rng(2)
    spec = SigmoidSpec(kind, 2.5)
    h = 1e-6
    checked = 0
    for x in rng.uniform(-3, 3, size=200):
        if abs(abs(2.5 * x) - 0.25) < 1e-3 or abs(x) < 1e-3:
            continue
        fd = (reference(kind, 2.5, x + h) - reference(kind, 2.5, x - h)) / (2 * h)
        assert derivative(spec, x) == pytest.approx(fd, rel=1e-6, abs=1e-8)
        checked += 1
    assert checked > 150


def test_optimal_joint_uses_linear_branch():
    spec = SigmoidSpec("optimal", 2.0)
    assert derivative(spec, 0.125) == 2.0
    assert derivative(spec, -0.125) == 2.0


def test_art_examples():
    assert art(0.0, 0.25) == 0.0
    assert art(0.0625, 0.5, eps=1e-300) == pytest.approx(0.25, abs=1e-15)
    assert abs(art(1.0, 0.25, 1e-10) - 1.0) < 1e-9
    assert np.all(np.sign(art(np.array([-2.0, -0.1, 0.3, 5.0]), 0.7)) == [-1, -1, 1, 1])


def test_unit_lipschitz_beta():
    assert unit_lipschitz_beta("logistic") == 4.0
    assert unit_lipschitz_beta("reciprocal") == 1.0
    assert unit_lipschitz_beta("cauchy") == math.pi
    assert unit_lipschitz_beta("optimal") == 1.0
    with pytest.raises(ValueError):
        unit_lipschitz_beta("logistic_art")


@pytest.mark.parametrize("kind", [k for k in ALL_KINDS if k is not SigmoidKind.LOGISTIC_ART])
def test_unit_lipschitz_beta_gives_unit_max_slope(kind):
    x = np.linspace(-5, 5, 100_001)
    slope = derivative(SigmoidSpec(kind, unit_lipschitz_beta(kind)), x)
    assert slope.max() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_input_rejected(bad):
    spec = SigmoidSpec("cauchy", 1.0)
    with pytest.raises(ValueError):
        evaluate(spec, bad)
    with pytest.raises(ValueError):
        derivative(spec, np.array([0.0, bad]))
    with pytest.raises(ValueError):
        art(bad, 0.5)


@pytest.mark.parametrize("kwargs", [
    dict(beta=0.0), dict(beta=-1.0), dict(beta=math.inf), dict(art_lambda=1.5), dict(art_eps=0.0),
])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        SigmoidSpec("logistic_art", **{"beta": 1.0, **kwargs})


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_grid_symmetry_and_monotone(kind):
    x = np.arange(-20.0, 20.0 + 5e-4, 1e-3)
    spec = SigmoidSpec(kind, 1.0)
    f = evaluate(spec, x)
    assert np.max(np.abs(f + evaluate(spec, -x) - 1.0)) <= 1e-12
    assert np.min(np.diff(f)) >= -1e-12
    assert evaluate(spec, 0.0) == 0.5


@settings(max_examples=200, deadline=None)
@given(kind=st.sampled_from(ALL_KINDS), beta=st.floats(1e-3, 1e4),
       x=st.floats(-1e6, 1e6, allow_nan=False))
def test_bounds_and_odd_symmetry(kind, beta, x):
    spec = SigmoidSpec(kind, beta)
    fx = evaluate(spec, x)
    assert 0.0 <= fx <= 1.0
    assert abs(fx + evaluate(spec, -x) - 1.0) <= 1e-12
    assert derivative(spec, x) >= 0.0


def test_relaxed_min_zero_is_x_times_f_minus_x():
    spec = SigmoidSpec("cauchy", 2.0)
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(relaxed_min_zero(spec, x), x * (np.arctan(-2 * x) / np.pi + 0.5), rtol=1e-14)
