from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from gridmpc.linalg import (
    SingularMatrixError,
    UnstableSystemError,
    is_positive_semidefinite,
    kronecker,
    matrix_exponential,
    solve_discrete_lyapunov,
    solve_linear,
)


def _random_stable(rng, n):
    # Scale a random matrix to a known spectral radius strictly inside the
    # unit circle.
    a = rng.standard_normal((n, n))
    rho = max(abs(np.linalg.eigvals(a)))
    target = rng.uniform(0.2, 0.95)
    return a * (target / rho)


class TestSolveLinear:
    def test_matches_reference_solver(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = rng.integers(1, 8)
            a = rng.standard_normal((n, n)) + n * np.eye(n)
            b = rng.standard_normal(n)
            x = solve_linear(a, b)
            assert np.allclose(x, np.linalg.solve(a, b), rtol=0, atol=1e-9)

    def test_residual_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(1, 10))
            a = rng.standard_normal((n, n)) + n * np.eye(n)
            b = rng.standard_normal(n) * rng.uniform(0.1, 100.0)
            x = solve_linear(a, b)
            residual = np.max(np.abs(a @ x - b))
            assert residual <= 1e-10 * max(1.0, np.max(np.abs(b)))

    def test_multiple_right_hand_sides(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        b = rng.standard_normal((4, 3))
        x = solve_linear(a, b)
        assert x.shape == (4, 3)
        assert np.allclose(a @ x, b, atol=1e-10)

    def test_exactly_singular_raises(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularMatrixError):
            solve_linear(a, np.ones(2))

    def test_pivot_below_relative_threshold_raises(self):
        # Row norms are O(1) so a 1e-14 pivot is below the 1e-12 threshold.
        a = np.array([[1e-14, 0.0], [0.0, 1.0]])
        with pytest.raises(SingularMatrixError):
            solve_linear(a, np.ones(2))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            solve_linear(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.ones(2))
        with pytest.raises(ValueError):
            solve_linear(np.eye(2), np.array([1.0, np.inf]))


class TestMatrixExponential:
    def test_diagonal_input(self):
        # Frequency-model diagonal: a = diag(A_freq * ts, 0).
        a = np.diag([-0.0625 * 0.1, 0.0])
        result = matrix_exponential(a)
        expected = np.diag([math.exp(-0.00625), 1.0])
        assert np.allclose(result, expected, rtol=0, atol=1e-12)
        assert abs(result[0, 0] - 0.993769) < 1e-6

    def test_zero_matrix(self):
        assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))

    def test_inverse_property(self):
        # exp(a) exp(-a) = I within 1e-9 for norms up to 10.
        rng = np.random.default_rng(19)
        for _ in range(40):
            n = int(rng.integers(1, 7))
            a = rng.standard_normal((n, n))
            a *= rng.uniform(0.1, 10.0) / max(1.0, np.linalg.norm(a, 1))
            product = matrix_exponential(a) @ matrix_exponential(-a)
            assert np.max(np.abs(product - np.eye(n))) < 1e-9

    def test_matches_scipy(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            n = int(rng.integers(1, 7))
            a = rng.standard_normal((n, n)) * rng.uniform(0.01, 3.0)
            ours = matrix_exponential(a)
            ref = scipy.linalg.expm(a)
            assert np.allclose(ours, ref, rtol=1e-10, atol=1e-12)

    def test_block_diagonal_preserved(self):
        rng = np.random.default_rng(29)
        a = rng.standard_normal((2, 2))
        b = rng.standard_normal((3, 3))
        full = np.zeros((5, 5))
        full[:2, :2] = a
        full[2:, 2:] = b
        result = matrix_exponential(full)
        assert np.allclose(result[:2, :2], matrix_exponential(a), atol=1e-12)
        assert np.allclose(result[2:, 2:], matrix_exponential(b), atol=1e-12)
        assert np.allclose(result[:2, 2:], 0.0, atol=1e-14)


class TestKronecker:
    def test_hand_example(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        expected = np.array(
            [
                [0.0, 1.0, 0.0, 2.0],
                [1.0, 0.0, 2.0, 0.0],
                [0.0, 3.0, 0.0, 4.0],
                [3.0, 0.0, 4.0, 0.0],
            ]
        )
        assert np.array_equal(kronecker(a, b), expected)

    def test_identity_identity(self):
        assert np.array_equal(kronecker(np.eye(2), np.eye(3)), np.eye(6))


class TestDiscreteLyapunov:
    def test_scalar_fixed_point(self):
        # Independent oracle: iterate x <- a x a + q to convergence.
        a, q = 0.5, 3.0
        x_iter = 0.0
        for _ in range(200):
            x_iter = a * x_iter * a + q
        x = solve_discrete_lyapunov(np.array([[a]]), np.array([[q]]))
        assert abs(x[0, 0] - x_iter) < 1e-12
        assert abs(x[0, 0] - 4.0) < 1e-12

    def test_zero_system_returns_q(self):
        q = np.array([[2.0, 0.5], [0.5, 1.0]])
        x = solve_discrete_lyapunov(np.zeros((2, 2)), q)
        assert np.allclose(x, q, atol=1e-14)

    def test_random_stable_systems(self):
        rng = np.random.default_rng(101)
        for _ in range(30):
            n = int(rng.integers(1, 6))
            a = _random_stable(rng, n)
            c = rng.standard_normal((n, n))
            q = c @ c.T
            x = solve_discrete_lyapunov(a, q)
            residual = np.max(np.abs(a @ x @ a.T - x + q))
            assert residual <= 1e-10 * max(1.0, np.max(np.abs(q)))
            assert np.max(np.abs(x - x.T)) <= 1e-12
            assert is_positive_semidefinite(x)

    def test_matches_scipy(self):
        rng = np.random.default_rng(103)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            a = _random_stable(rng, n)
            q = np.eye(n)
            ours = solve_discrete_lyapunov(a, q)
            ref = scipy.linalg.solve_discrete_lyapunov(a, q)
            assert np.allclose(ours, ref, rtol=1e-8, atol=1e-10)

    def test_unstable_raises(self):
        with pytest.raises(UnstableSystemError):
            solve_discrete_lyapunov(np.eye(2), np.eye(2))
        with pytest.raises(UnstableSystemError):
            solve_discrete_lyapunov(np.array([[1.05]]), np.array([[1.0]]))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            solve_discrete_lyapunov(np.zeros((2, 2)), np.zeros((3, 3)))


class TestPsdCheck:
    def test_accepts_psd(self):
        assert is_positive_semidefinite(np.zeros((2, 2)))
        assert is_positive_semidefinite(np.diag([1.0, 0.0]))

    def test_rejects_indefinite(self):
        assert not is_positive_semidefinite(np.diag([1.0, -1.0]))
