import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msplab.numerics import (
    HermiteRule, LegendreRule, RngSpec, UnsupportedSizeError, character_matrix, double_factorial_moment,
    expect_gaussian, expect_hypercube, hypercube, sample_rademacher, uniform_moment,
)


def test_hypercube_bit_convention():
    Z = hypercube(3)
    assert Z.shape == (8, 3)
    np.testing.assert_array_equal(Z[0], [-1, -1, -1])
    np.testing.assert_array_equal(Z[5], [1, -1, 1])


def test_character_matrix_is_orthogonal():
    C = character_matrix(4)
    np.testing.assert_allclose(C.T @ C, 16 * np.eye(16))
    Z = hypercube(4)
    np.testing.assert_allclose(C[:, 0b0110], Z[:, 1] * Z[:, 2])


def test_size_cap():
    with pytest.raises(UnsupportedSizeError):
        hypercube(17)


def test_expect_hypercube():
    assert expect_hypercube(lambda Z: Z[:, 0] * Z[:, 1], 3) == 0.0
    assert expect_hypercube(lambda Z: (Z.sum(axis=1)) ** 2, 3) == 3.0
    with pytest.raises(ValueError):
        expect_hypercube(lambda Z: Z, 2)


@pytest.mark.parametrize("k", range(0, 21))
def test_hermite_moments(k):
    assert expect_gaussian(lambda x: x ** k, HermiteRule.gauss(21)) == pytest.approx(
        double_factorial_moment(k), rel=1e-10, abs=1e-12 * double_factorial_moment(k + k % 2))


@pytest.mark.parametrize("k", range(0, 40))
def test_legendre_moments(k):
    r = LegendreRule.gauss(64)
    assert float(np.dot(r.weights, r.nodes ** k)) == pytest.approx(uniform_moment(k), abs=1e-14)


def test_degenerate_rule_is_rejected_by_expect_gaussian():
    with pytest.raises(ValueError):
        expect_gaussian(np.cos, HermiteRule.degenerate())


def test_gaussian_cosine():
    assert expect_gaussian(np.cos, HermiteRule.gauss(30)) == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_rng_streams_are_stable_and_distinct():
    a = RngSpec(5).child("data").generator().integers(0, 1 << 30, 4)
    b = RngSpec(5).child("data").generator().integers(0, 1 << 30, 4)
    c = RngSpec(5).child("init").generator().integers(0, 1 << 30, 4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@given(st.integers(1, 40), st.integers(1, 50), st.integers(0, 2 ** 32))
def test_rademacher_entries(d, n, seed):
    X = sample_rademacher(d, n, RngSpec(seed))
    assert X.shape == (n, d)
    assert set(np.unique(X)) <= {-1.0, 1.0}
