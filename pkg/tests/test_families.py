import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locagg.errors import NonFiniteError, ValidationError
from locagg.families import Family, deviance, gradient, inverse_link, loss, sigmoid, softplus

finite = st.floats(-30, 30, allow_nan=False)


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_parse_accepts_names_codes_and_members():
    assert Family.parse("Gaussian") is Family.GAUSSIAN
    assert Family.parse(1) is Family.BINOMIAL
    assert Family.parse(Family.BINOMIAL) is Family.BINOMIAL
    with pytest.raises(ValidationError, match="unknown family"):
        Family.parse("poisson")


def test_binomial_loss_at_zero_is_n_log_two():
    y = np.array([0, 1, 1, 0, 1.0])
    assert loss("binomial", y, np.zeros(5)) == pytest.approx(5 * math.log(2), rel=1e-15)


def test_gaussian_loss_vanishes_at_perfect_fit():
    y = np.array([1.5, -2.0, 0.25])
    assert loss("gaussian", y, y.copy()) == 0.0


def test_binomial_loss_saturated_value():
    # -10 + log(1 + e^10) evaluated without cancellation
    expected = math.log1p(math.exp(-10.0))
    assert loss("binomial", np.array([1.0]), np.array([10.0])) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(4.54e-5, rel=1e-3)


def test_binomial_gradient_at_zero():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((7, 3))
    y = rng.integers(0, 2, 7).astype(float)
    np.testing.assert_allclose(gradient("binomial", X, y, np.zeros(3)), X.T @ (0.5 - y))


def test_gaussian_gradient_vanishes_at_least_squares():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 5))
    y = rng.standard_normal(40)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.linalg.norm(gradient("gaussian", X, y, beta)) <= 1e-10


def test_sigmoid_saturates_without_nan():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    with np.errstate(over="raise", invalid="raise"):
        vals = sigmoid(np.array([-800.0, 800.0]))
    assert vals[0] == 0.0 and vals[1] == 1.0
    assert softplus(np.array([800.0]))[0] == 800.0


def test_identity_link():
    eta = np.array([-3.0, 0.0, 2.5])
    np.testing.assert_array_equal(inverse_link("gaussian", eta), eta)


def test_loss_rejects_non_finite_and_mismatched():
    with pytest.raises(NonFiniteError):
        loss("gaussian", np.zeros(2), np.array([0.0, np.inf]))
    with pytest.raises(ValidationError, match="length mismatch"):
        loss("gaussian", np.zeros(2), np.zeros(3))
    with pytest.raises(ValidationError, match="dimension mismatch"):
        gradient("gaussian", np.zeros((3, 2)), np.zeros(3), np.zeros(4))


def test_deviance_is_twice_loss():
    y = np.array([1.0, 0.0])
    eta = np.array([0.3, -1.2])
    assert deviance("binomial", y, eta) == 2 * loss("binomial", y, eta)


@settings(max_examples=200, deadline=None)
@given(finite)
def test_sigmoid_symmetry(eta):
    a = sigmoid(np.array([eta]))[0]
    b = sigmoid(np.array([-eta]))[0]
    assert abs(a + b - 1.0) <= 1e-15


@pytest.mark.parametrize("family", ["gaussian", "binomial"])
def test_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(7 if family == "gaussian" else 8)
    worst = 0.0
    for _ in range(100):
        n, p = rng.integers(5, 30), rng.integers(1, 8)
        X = rng.standard_normal((n, p))
        beta = rng.standard_normal(p)
        y = rng.standard_normal(n) if family == "gaussian" else rng.integers(0, 2, n).astype(float)
        g = gradient(family, X, y, beta)
        fd = central_difference(lambda b: loss(family, y, X @ b), beta)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8))
    assert worst <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99), st.sampled_from(["gaussian", "binomial"]))
def test_loss_is_convex_along_segments(seed, theta, family):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((12, 3))
    y = rng.standard_normal(12) if family == "gaussian" else rng.integers(0, 2, 12).astype(float)
    b1, b2 = 3 * rng.standard_normal(3), 3 * rng.standard_normal(3)
    mid = loss(family, y, X @ (theta * b1 + (1 - theta) * b2))
    chord = theta * loss(family, y, X @ b1) + (1 - theta) * loss(family, y, X @ b2)
    assert mid <= chord + 1e-10 * max(1.0, abs(chord))
