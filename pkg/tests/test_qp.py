from __future__ import annotations

import numpy as np
import pytest

import gridmpc.qp as qp_module
from gridmpc.qp import QpProblem, QpSolution, QpStatus, solve_qp
from qp_oracles import enumerate_qp, grid_search_qp, random_strictly_convex_qp


def _problem(h, f, a=None, b=None, **kwargs):
    n = len(f)
    if a is None:
        a = np.zeros((0, n))
        b = np.zeros(0)
    return QpProblem(
        hessian=np.asarray(h, float),
        linear=np.asarray(f, float),
        ineq_a=np.asarray(a, float),
        ineq_b=np.asarray(b, float),
        **kwargs,
    )


class TestBasicSolves:
    def test_scalar_unconstrained(self):
        sol = solve_qp(_problem([[2.0]], [-2.0]))
        assert sol.status is QpStatus.OPTIMAL
        assert abs(sol.z[0] - 1.0) < 1e-12
        assert abs(sol.objective - (-1.0)) < 1e-12

    def test_scalar_with_active_bound(self):
        sol = solve_qp(_problem([[2.0]], [-2.0], [[1.0]], [0.5]))
        assert sol.status is QpStatus.OPTIMAL
        assert abs(sol.z[0] - 0.5) < 1e-12
        assert sol.active_set == (0,)

    def test_two_dim_simplex_corner(self):
        # min 0.5||z||^2 - [1,1]z  s.t. z1+z2 <= 1, z >= 0
        h = np.eye(2)
        f = [-1.0, -1.0]
        a = [[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
        b = [1.0, 0.0, 0.0]
        sol = solve_qp(_problem(h, f, a, b))
        assert sol.status is QpStatus.OPTIMAL
        assert np.allclose(sol.z, [0.5, 0.5], atol=1e-10)
        grid_obj, _ = grid_search_qp(
            np.eye(2), np.array(f), np.array(a), np.array(b),
            lo=np.zeros(2), hi=np.ones(2), resolution=1e-3,
        )
        assert sol.objective <= grid_obj + 1e-5

    def test_infeasible_box(self):
        sol = solve_qp(_problem([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0]))
        assert sol.status is QpStatus.INFEASIBLE
        assert sol.kkt_feasibility > 0.9

    def test_equality_posed_as_inequality_pair(self):
        # z1 + z2 == 1 via two rows, minimize distance to origin.
        h = np.eye(2)
        f = np.zeros(2)
        a = [[1.0, 1.0], [-1.0, -1.0]]
        b = [1.0, -1.0]
        sol = solve_qp(_problem(h, f, a, b))
        assert sol.status is QpStatus.OPTIMAL
        assert np.allclose(sol.z, [0.5, 0.5], atol=1e-9)

    def test_semidefinite_flat_direction(self):
        # Flat in z2 with a linear push against its bound.
        h = np.diag([2.0, 0.0])
        f = np.array([-2.0, 1.0])
        a = np.array([[0.0, -1.0]])
        b = np.array([0.0])
        sol = solve_qp(_problem(h, f, a, b))
        assert sol.status is QpStatus.OPTIMAL
        assert abs(sol.z[0] - 1.0) < 1e-10
        assert abs(sol.z[1]) < 1e-10
        assert abs(sol.objective - (-1.0)) < 1e-10

    def test_redundant_duplicate_rows(self):
        a = [[1.0], [1.0], [1.0]]
        b = [0.5, 0.5, 0.5]
        sol = solve_qp(_problem([[2.0]], [-2.0], a, b))
        assert sol.status is QpStatus.OPTIMAL
        assert abs(sol.z[0] - 0.5) < 1e-10


class TestRandomizedOracles:
    def test_grid_search_agreement(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            h, f, a, b, lo, hi, z_int = random_strictly_convex_qp(rng)
            sol = solve_qp(_problem(h, f, a, b))
            assert sol.status is QpStatus.OPTIMAL
            grid_obj, _ = grid_search_qp(h, f, a, b, lo, hi, 1e-3, seed_points=[z_int])
            assert sol.objective <= grid_obj + 1e-5

    def test_exact_enumeration_agreement(self):
        rng = np.random.default_rng(43)
        for _ in range(120):
            h, f, a, b, *_ = random_strictly_convex_qp(rng)
            sol = solve_qp(_problem(h, f, a, b))
            exact = enumerate_qp(h, f, a, b)
            assert exact is not None
            exact_obj, exact_z = exact
            assert sol.status is QpStatus.OPTIMAL
            assert abs(sol.objective - exact_obj) < 1e-8
            assert np.allclose(sol.z, exact_z, atol=1e-6)

    def test_kkt_certificates(self):
        rng = np.random.default_rng(44)
        for _ in range(80):
            h, f, a, b, *_ = random_strictly_convex_qp(rng)
            sol = solve_qp(_problem(h, f, a, b))
            assert sol.status is QpStatus.OPTIMAL
            assert sol.kkt_stationarity <= 1e-8
            assert sol.kkt_feasibility <= 1e-9
            assert np.all(sol.multipliers >= -1e-9)
            slacks = b - a @ sol.z
            assert np.max(np.abs(sol.multipliers * slacks)) <= 1e-8 * max(
                1.0, float(np.max(np.abs(sol.multipliers)))
            )

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(45)
        h, f, a, b, *_ = random_strictly_convex_qp(rng)
        first = solve_qp(_problem(h, f, a, b))
        second = solve_qp(_problem(h, f, a, b))
        assert np.array_equal(first.z, second.z)
        assert first.iterations == second.iterations
        assert first.active_set == second.active_set

    def test_warm_start_same_solution(self):
        rng = np.random.default_rng(46)
        for _ in range(30):
            h, f, a, b, *_ = random_strictly_convex_qp(rng)
            cold = solve_qp(_problem(h, f, a, b))
            warm = solve_qp(
                _problem(
                    h, f, a, b,
                    warm_active_set=cold.active_set,
                    start_point=cold.z,
                )
            )
            assert warm.status is QpStatus.OPTIMAL
            assert np.max(np.abs(warm.z - cold.z)) <= 1e-9
            assert warm.iterations <= cold.iterations


class TestValidationAndLimits:
    def test_rejects_asymmetric_hessian(self):
        with pytest.raises(ValueError, match="symmetric"):
            solve_qp(_problem([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0]))

    def test_rejects_indefinite_hessian(self):
        with pytest.raises(ValueError, match="semidefinite"):
            solve_qp(_problem([[-1.0]], [0.0]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            solve_qp(_problem([[np.nan]], [0.0]))
        with pytest.raises(ValueError):
            solve_qp(_problem([[1.0]], [np.inf]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_qp(_problem(np.eye(2), [1.0]))
        with pytest.raises(ValueError):
            solve_qp(_problem([[1.0]], [0.0], [[1.0, 2.0]], [0.0]))

    def test_iteration_limit_status(self, monkeypatch):
        monkeypatch.setattr(qp_module, "ITERATION_CAP_FACTOR", 0)
        rng = np.random.default_rng(47)
        h, f, a, b, *_ = random_strictly_convex_qp(rng)
        sol = solve_qp(_problem(h, f, a, b))
        assert sol.status is QpStatus.ITERATION_LIMIT

    def test_solution_reports_time_and_iterations(self):
        sol = solve_qp(_problem([[2.0]], [-2.0], [[1.0]], [0.5]))
        assert isinstance(sol, QpSolution)
        assert sol.solve_time >= 0.0
        assert sol.iterations >= 1
