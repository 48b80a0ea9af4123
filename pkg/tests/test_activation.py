import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msplab.activation import Activation


def _fd_derivatives(f, order, h=0.02):
    """Central differences of order up to 4 at zero."""
    x = np.arange(-4, 5) * h
    y = f(x)
    c = [y[4],
         (y[5] - y[3]) / (2 * h),
         (y[5] - 2 * y[4] + y[3]) / h ** 2,
         (y[6] - 2 * y[5] + 2 * y[3] - y[2]) / (2 * h ** 3),
         (y[6] - 4 * y[5] + 6 * y[4] - 4 * y[3] + y[2]) / h ** 4]
    return c[: order + 1]


def test_sigmoid_taylor_frozen():
    # reference values from an independent finite-difference oracle
    m = Activation.shifted_sigmoid(0.5).taylor(4)
    np.testing.assert_allclose(
        m, [0.3775406687981454, 0.2350037122015945, 0.057556794852320785, -0.09635675628958464,
            -0.10475593058033113], rtol=1e-12)


@pytest.mark.parametrize("act", [Activation.shifted_sigmoid(0.5), Activation.shifted_sigmoid(1.0),
                                 Activation.tanh(), Activation.polynomial([0.1, 1.0, -0.5, 0.3, 0.2])])
def test_taylor_matches_finite_differences(act):
    np.testing.assert_allclose(act.taylor(4), _fd_derivatives(act.sigma, 4), atol=2e-3)


def test_tanh_taylor():
    assert Activation.tanh().taylor(5) == [0.0, 1.0, 0.0, -2.0, 0.0, 16.0]


@given(st.floats(-20, 20))
def test_sigmoid_derivative(x):
    act = Activation.shifted_sigmoid(0.5)
    h = 1e-5
    fd = (act.sigma(x + h) - act.sigma(x - h)) / (2 * h)
    assert float(act.dsigma(x)) == pytest.approx(float(fd), abs=1e-9)


def test_sigmoid_shift():
    act = Activation.shifted_sigmoid(1.0)
    assert float(act.sigma(1.0)) == pytest.approx(0.5)
    assert float(act.sigma(0.0)) == pytest.approx(1 / (1 + math.e))


def test_truncated_power():
    act = Activation.truncated_power(4)
    assert float(act.sigma(0.5)) == pytest.approx(1.5 ** 4)
    assert float(act.sigma(3.0)) == 16.0
    assert float(act.dsigma(3.0)) == 0.0
    assert act.taylor(5) == [1, 4, 12, 24, 24, 0.0]
    before = act.out_of_range
    act.sigma(np.array([0.0, 2.0, -5.0]))
    assert act.out_of_range == before + 2


def test_polynomial_is_exact_taylor():
    act = Activation.polynomial([1.0, 2.0, 6.0])
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(act.sigma(x), 1 + 2 * x + 3 * x ** 2)
    np.testing.assert_allclose(act.dsigma(x), 2 + 6 * x)
    assert act.poly_degree() == 2


def test_perturbation_adds_coefficients():
    base = Activation.shifted_sigmoid(0.5)
    act = base.perturb([0.0, 0.1, 0.0, 0.2])
    np.testing.assert_allclose(np.array(act.taylor(3)) - np.array(base.taylor(3)), [0, 0.1, 0, 0.2])
    x = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(act.sigma(x) - base.sigma(x), 0.1 * x + 0.2 * x ** 3 / 6)
    rnd = base.perturb_random(0.01, 3, np.random.default_rng(0))
    assert all(abs(r) <= 0.01 for r in rnd.rho)


def test_unknown_kind():
    with pytest.raises(ValueError):
        Activation("relu")
