"""First-layer map, kernel matrix, Jacobi eigensolver and the linear second phase."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msplab.activation import Activation
from msplab.fourier import from_string
from msplab.numerics import LegendreRule
from msplab.twophase import (
    InvalidInputError, KernelMatrix, certify, gram_monomial_matrix, integrate_simplified, jacobi_eigh,
    kernel_matrix, lambda_min, matrix_csv, phase1, phase2, residual_flow, subset_labels,
)

from conftest import staircase

SIG = Activation.shifted_sigmoid(0.5)


def _cubic_roots(A):
    """Eigenvalues of a symmetric 3x3 matrix by the trigonometric formula."""
    q = np.trace(A) / 3
    p1 = A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2
    p2 = sum((A[i, i] - q) ** 2 for i in range(3)) + 2 * p1
    p = math.sqrt(p2 / 6)
    B = (A - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(B) / 2, -1, 1)
    phi = math.acos(r) / 3
    e1 = q + 2 * p * math.cos(phi)
    e3 = q + 2 * p * math.cos(phi + 2 * math.pi / 3)
    return sorted([e1, e3, 3 * q - e1 - e3])


class TestJacobi:
    def test_identity_and_diagonal(self):
        assert lambda_min(np.eye(4)) == 1.0
        assert lambda_min(np.diag([1.0, 2.0, 3.0])) == 1.0

    def test_cubic_oracle(self, gen):
        for _ in range(20):
            B = gen.normal(size=(3, 3))
            A = B.T @ B
            np.testing.assert_allclose(jacobi_eigh(A)[0], _cubic_roots(A), atol=1e-8)

    @given(st.integers(2, 24), st.integers(0, 2 ** 31))
    def test_residual_and_orthogonality(self, n, seed):
        g = np.random.default_rng(seed)
        B = g.normal(size=(n, n))
        A = B + B.T
        w, V = jacobi_eigh(A)
        assert np.max(np.abs(A @ V - V * w)) <= 1e-9 * max(1.0, np.abs(A).max())
        np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
        assert np.all(np.diff(w) >= 0)

    def test_against_lapack(self, gen):
        B = gen.normal(size=(40, 40))
        A = B @ B.T
        np.testing.assert_allclose(jacobi_eigh(A)[0], np.linalg.eigvalsh(A), rtol=1e-10, atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInputError):
            jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(InvalidInputError):
            KernelMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_large(self):
        with pytest.raises(InvalidInputError):
            jacobi_eigh(np.eye(257))


class TestPhase1:
    def test_zero_time(self):
        fm = phase1(staircase(2), SIG, 0.0)
        np.testing.assert_array_equal(fm.U, 0.0)

    def test_first_coordinate_small_time(self):
        h = staircase(2)
        a = np.array([0.5, -1.0])
        m1 = SIG.taylor(1)[1]
        for t in (0.02, 0.01):
            U = integrate_simplified(h, SIG, a, t, t / 100, "rk4")
            rel = np.abs(U[:, 0] - a * t * m1) / np.abs(a * t * m1)
            assert np.all(rel < 5 * t)

    def test_full_and_simplified_close(self):
        h = staircase(2)
        full = phase1(h, SIG, 0.05, LegendreRule.gauss(8), 0.005)
        simp = phase1(h, SIG, 0.05, LegendreRule.gauss(8), 0.005, "simplified")
        assert np.max(np.abs(full.U - simp.U)) < 1e-2 * np.max(np.abs(full.U))

    def test_discrete_variant(self):
        fm = phase1(staircase(2), SIG, 0.1, LegendreRule.gauss(8), variant="discrete", eta=0.05)
        assert fm.source == "discrete" and np.any(fm.U != 0)


class TestKernel:
    def test_zero_map_has_rank_one(self):
        fm = phase1(staircase(2), SIG, 0.0)
        K = kernel_matrix(fm, SIG)
        np.testing.assert_allclose(K.K, SIG.taylor(0)[0] ** 2)
        assert np.linalg.matrix_rank(K.K) == 1
        assert abs(lambda_min(K)) < 1e-14

    def test_psd_and_same_spectrum(self):
        fm = phase1(staircase(3), SIG, 0.5, LegendreRule.gauss(16), 0.05)
        K = kernel_matrix(fm, SIG)
        a = np.linalg.eigvalsh(K.operator())
        b = np.linalg.eigvalsh(K.fourier())
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert a.min() >= -1e-10

    def test_symmetric_target_shares_fitted_coefficients(self):
        h = from_string("z1 + z1z2 + z3 + z3z4")
        fm = phase1(h, Activation.shifted_sigmoid(1.0), 1.0, LegendreRule.gauss(16), 0.05)
        np.testing.assert_allclose(fm.U[:, [2, 3, 0, 1]], fm.U, atol=1e-12)
        K = kernel_matrix(fm, Activation.shifted_sigmoid(1.0))
        # the kernel is invariant under the coordinate swap, so its range is too
        Kf = K.fourier()
        perm = [int(sum(1 << [2, 3, 0, 1][b] for b in range(4) if (m >> b) & 1)) for m in range(16)]
        np.testing.assert_allclose(Kf[np.ix_(perm, perm)], Kf, atol=1e-12)
        assert np.linalg.matrix_rank(Kf, tol=1e-10) < 16


class TestPhase2:
    def test_zero_residual(self):
        h = staircase(2)
        fm = phase1(h, SIG, 0.1, LegendreRule.gauss(8))
        K = kernel_matrix(fm, SIG)
        g = np.zeros(4)
        np.testing.assert_array_equal(residual_flow(K.fourier(), g, [0, 1, 2]), 0.0)

    def test_identity_generator(self):
        g = np.array([1.0, 2.0])
        np.testing.assert_allclose(residual_flow(np.eye(2), g, [0.0, 1.0]), 5 * np.exp([0.0, -2.0]))

    def test_euler_approaches_exact(self, gen):
        B = gen.normal(size=(4, 4))
        A = B @ B.T / 4
        g = gen.normal(size=4)
        ex = residual_flow(A, g, [1.0])
        e1 = residual_flow(A, g, [1.0], "euler", 0.01)
        e2 = residual_flow(A, g, [1.0], "euler", 0.005)
        assert abs(e2 - ex) < abs(e1 - ex)

    def test_eigen_identity_and_exponential_bound(self):
        h = staircase(2)
        fm = phase1(h, SIG, 1.5, LegendreRule.gauss(16), 0.05)
        K = kernel_matrix(fm, SIG)
        res = phase2(K, h, fm, SIG, horizon=50.0)
        bound = math.exp(-res.lambda_min * (res.T2 - res.T1)) * res.risk_T1
        assert res.risk_T2 <= bound + 1e-9

    def test_unreachable_target_reports_plateau(self):
        h = staircase(2)
        fm = phase1(h, SIG, 0.0)
        K = kernel_matrix(fm, SIG)
        res = phase2(K, h, fm, SIG, target=1e-3)
        assert not res.reached
        assert res.plateau > 1e-3

    def test_exactly_one_of_horizon_or_target(self):
        h = staircase(2)
        fm = phase1(h, SIG, 0.0)
        with pytest.raises(ValueError):
            phase2(kernel_matrix(fm, SIG), h, fm, SIG)


def test_certificate_report_mentions_status():
    cert, _, _ = certify(staircase(2), SIG, 0.02)
    text = cert.report()
    assert "threshold = 1e-10" in text and "status = " in text


def test_monomial_gram_quadrature_matches_closed_form():
    M = gram_monomial_matrix(2)
    np.testing.assert_allclose(gram_monomial_matrix(2, LegendreRule.gauss(8)), M, atol=1e-15)
    assert M[1, 1] == pytest.approx(1 / 3)
    assert np.linalg.eigvalsh(M).min() > 0


def test_matrix_csv_labels():
    text = matrix_csv(np.eye(2), subset_labels(1))
    assert text.splitlines()[0] == ",c_0,c_1"
    assert text.splitlines()[1] == "c_0,1.0,0.0"
