"""Dense convex quadratic programming by a primal active-set method.

Solves

    minimize    0.5 * z' H z + f' z
    subject to  A z <= b

for symmetric positive semidefinite ``H``.  Only inequality constraints are
supported; equalities should be posed as paired inequalities by the caller.

The method is a textbook primal active-set scheme: find a feasible point
(phase 1 minimizes the worst constraint violation), then repeatedly solve the
equality-constrained subproblem on the current working set through a
nullspace factorization, take the longest feasible step along the resulting
direction, and add or drop constraints until the KKT conditions hold.  Ties
in both the blocking-constraint and the drop choice are broken by smallest
row index to avoid cycling on degenerate problems.  Semidefinite Hessians
(including the all-zero phase-1 objective) are handled through an eigenvalue
split of the reduced Hessian; any minimizer is returned in the flat
directions.

The implementation is deterministic: identical inputs produce bit-identical
iterates and solutions, with only ``solve_time`` varying between runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg import is_positive_semidefinite

__all__ = [
    "QpProblem",
    "QpSolution",
    "QpStatus",
    "UnboundedObjectiveError",
    "solve_qp",
]

# Feasibility tolerance: a point is accepted when no constraint is violated
# by more than this.
FEASIBILITY_TOL = 1e-9
# Reported stationarity target at optimal solutions.
STATIONARITY_TOL = 1e-8
# Iteration cap factor; the cap is ITERATION_CAP_FACTOR * (n + p).
ITERATION_CAP_FACTOR = 50
# Symmetry tolerance for the Hessian, relative to max(1, ||H||_inf).
SYMMETRY_RTOL = 1e-12


class UnboundedObjectiveError(ValueError):
    """Objective decreases without bound along a feasible ray."""


class QpStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class QpProblem:
    """Quadratic program ``min 0.5 z'Hz + f'z  s.t.  A z <= b``.

    Attributes
    ----------
    hessian : (n, n) ndarray
        Symmetric positive semidefinite cost matrix.
    linear : (n,) ndarray
        Linear cost term.
    ineq_a : (p, n) ndarray
        Inequality constraint matrix; ``p`` may be zero.
    ineq_b : (p,) ndarray
        Inequality right-hand side.
    warm_active_set : tuple of int, optional
        Constraint rows expected active at the solution; used to seed the
        working set.  Affects only iteration counts, never the solution.
    start_point : (n,) ndarray, optional
        Starting guess.  If feasible it skips phase 1 entirely.
    """

    hessian: np.ndarray
    linear: np.ndarray
    ineq_a: np.ndarray
    ineq_b: np.ndarray
    warm_active_set: tuple[int, ...] | None = None
    start_point: np.ndarray | None = None


@dataclass
class QpSolution:
    """Result of :func:`solve_qp`.

    ``objective`` is ``0.5 z'Hz + f'z`` at the returned point.  The KKT
    fields report the stationarity residual ``||Hz + f + A' lam||_inf`` and
    the worst primal constraint violation ``max(0, max(Az - b))``; at an
    ``OPTIMAL`` exit they satisfy the module tolerances and all multipliers
    are nonnegative up to rounding.
    """

    z: np.ndarray
    status: QpStatus
    objective: float
    kkt_stationarity: float
    kkt_feasibility: float
    active_set: tuple[int, ...] = ()
    iterations: int = 0
    solve_time: float = 0.0
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _validate(problem: QpProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    h = np.asarray(problem.hessian, dtype=float)
    f = np.asarray(problem.linear, dtype=float).ravel()
    n = f.shape[0]
    if h.shape != (n, n):
        raise ValueError(f"hessian shape {h.shape} does not match linear size {n}")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(f))):
        raise ValueError("cost terms contain non-finite entries")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if h.size and float(np.max(np.abs(h - h.T))) > SYMMETRY_RTOL * scale:
        raise ValueError("hessian is not symmetric")
    if not is_positive_semidefinite(h):
        raise ValueError("hessian is not positive semidefinite")

    a = np.asarray(problem.ineq_a, dtype=float)
    b = np.asarray(problem.ineq_b, dtype=float).ravel()
    if a.size == 0:
        a = a.reshape(0, n)
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"ineq_a shape {a.shape} incompatible with {n} variables")
    if a.shape[0] != b.shape[0]:
        raise ValueError("ineq_a and ineq_b row counts differ")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("constraints contain non-finite entries")
    return h, f, a, b


def _nullspace(a_work: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis of the nullspace of the working-set rows."""
    if a_work.shape[0] == 0:
        return np.eye(n)
    _, sing, vt = np.linalg.svd(a_work)
    tol = max(a_work.shape) * np.finfo(float).eps * (sing[0] if sing.size else 0.0)
    rank = int(np.sum(sing > tol))
    return vt[rank:].T


def _reduced_direction(h, g, z_basis):
    """Minimizing or unbounded-descent direction within the nullspace.

    Returns ``(direction, bounded)`` where ``bounded`` is False when the
    objective decreases linearly forever along the direction (flat Hessian
    with a nonzero gradient component).  A zero direction means the current
    point already minimizes over the working set.
    """
    if z_basis.shape[1] == 0:
        return np.zeros(h.shape[0]), True
    h_red = z_basis.T @ h @ z_basis
    g_red = z_basis.T @ g
    w, v = np.linalg.eigh(0.5 * (h_red + h_red.T))
    w_max = float(w[-1]) if w.size else 0.0
    eig_tol = 1e-12 * max(1.0, w_max)
    comp = v.T @ g_red
    grad_tol = 1e-11 * max(1.0, float(np.max(np.abs(g_red))))
    flat = w <= eig_tol
    escaping = flat & (np.abs(comp) > grad_tol)
    if np.any(escaping):
        d_red = -(v[:, escaping] @ comp[escaping])
        d_red /= np.max(np.abs(d_red))
        return z_basis @ d_red, False
    pos = ~flat
    if not np.any(pos):
        return np.zeros(h.shape[0]), True
    d_red = -(v[:, pos] @ (comp[pos] / w[pos]))
    return z_basis @ d_red, True


def _blocking_constraint(a, b, z, direction, in_work):
    """Largest feasible step along ``direction`` and the first blocking row."""
    alpha = np.inf
    blocking = -1
    ax = a @ z
    ad = a @ direction
    d_scale = float(np.max(np.abs(direction))) if direction.size else 0.0
    for i in range(a.shape[0]):
        if in_work[i]:
            continue
        denom = ad[i]
        if denom <= 1e-13 * max(1.0, float(np.max(np.abs(a[i]))) * d_scale):
            continue
        slack = max(b[i] - ax[i], 0.0)
        ratio = slack / denom
        if ratio < alpha - 1e-12 * (1.0 + abs(alpha) if np.isfinite(alpha) else 1.0):
            alpha = ratio
            blocking = i
        # Ties keep the smallest row index, which is the first one seen.
    return alpha, blocking


def _multipliers(a_work: np.ndarray, g: np.ndarray) -> np.ndarray:
    if a_work.shape[0] == 0:
        return np.zeros(0)
    lam, *_ = np.linalg.lstsq(a_work.T, -g, rcond=None)
    return lam


def _independent_tight_rows(a, b, z, preferred=()):
    """Working-set seed: linearly independent rows tight at ``z``.

    Rows listed in ``preferred`` are considered first so a warm-start set
    survives when still active.
    """
    n = a.shape[1]
    residual = b - a @ z
    order = list(dict.fromkeys([*preferred, *range(a.shape[0])]))
    work: list[int] = []
    basis: list[np.ndarray] = []
    for i in order:
        if i < 0 or i >= a.shape[0]:
            continue
        if residual[i] > 1e-8 * (1.0 + abs(b[i])):
            continue
        if len(work) >= n:
            break
        row = a[i].astype(float)
        for q in basis:
            row = row - (q @ a[i]) * q
        norm = np.linalg.norm(row)
        if norm <= 1e-10 * max(1.0, np.linalg.norm(a[i])):
            continue
        basis.append(row / norm)
        work.append(i)
    return work


def _active_set_iterate(h, f, a, b, z, work, max_iter):
    """Run the primal active-set loop from a feasible point.

    Returns ``(z, work, iterations, hit_limit)``.
    """
    n = z.shape[0]
    in_work = np.zeros(a.shape[0], dtype=bool)
    in_work[work] = True
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        g = h @ z + f
        a_work = a[work] if work else a[:0]
        z_basis = _nullspace(a_work, n)
        direction, bounded = _reduced_direction(h, g, z_basis)

        step_scale = 1e-13 * (1.0 + float(np.max(np.abs(z))))
        if float(np.max(np.abs(direction), initial=0.0)) <= step_scale:
            lam = _multipliers(a_work, g)
            if lam.size == 0:
                return z, work, iterations, False
            drop_tol = 1e-9 * max(1.0, float(np.max(np.abs(lam))))
            worst = np.min(lam)
            if worst >= -drop_tol:
                return z, work, iterations, False
            # Most negative multiplier leaves; ties by smallest row index.
            candidates = [
                k for k in range(len(work)) if lam[k] <= worst + 1e-12 * (1.0 + abs(worst))
            ]
            leave = min(candidates, key=lambda k: work[k])
            in_work[work[leave]] = False
            work = [w for j, w in enumerate(work) if j != leave]
            continue

        alpha_block, blocking = _blocking_constraint(a, b, z, direction, in_work)
        if bounded:
            alpha = min(1.0, alpha_block)
        else:
            if not np.isfinite(alpha_block):
                raise UnboundedObjectiveError(
                    "objective is unbounded below along a feasible direction"
                )
            alpha = alpha_block
        z = z + alpha * direction
        if blocking >= 0 and alpha_block <= alpha:
            work = [*work, blocking]
            in_work[blocking] = True

    return z, work, iterations, True


def _phase_one(a, b, z0, max_iter):
    """Minimize the worst violation; returns (feasible_z, violation, iters)."""
    p, n = a.shape
    viol0 = float(np.max(a @ z0 - b, initial=0.0))
    t0 = max(viol0, 0.0)
    aug_a = np.hstack([np.vstack([a, np.zeros((1, n))]), -np.ones((p + 1, 1))])
    aug_b = np.concatenate([b, [0.0]])
    aug_h = np.zeros((n + 1, n + 1))
    aug_f = np.zeros(n + 1)
    aug_f[n] = 1.0
    v = np.concatenate([z0, [t0]])
    work = _independent_tight_rows(aug_a, aug_b, v)
    v, _, iterations, hit_limit = _active_set_iterate(
        aug_h, aug_f, aug_a, aug_b, v, work, max_iter
    )
    return v[:n], float(v[n]), iterations, hit_limit


def solve_qp(problem: QpProblem) -> QpSolution:
    """Solve a convex QP; see the module docstring for the formulation.

    Returns a :class:`QpSolution` whose status is ``OPTIMAL`` when the KKT
    conditions hold, ``INFEASIBLE`` when phase 1 cannot reduce the worst
    constraint violation to ``FEASIBILITY_TOL``, or ``ITERATION_LIMIT`` when
    the ``ITERATION_CAP_FACTOR * (n + p)`` cap is exhausted.

    Raises
    ------
    UnboundedObjectiveError
        If the objective decreases without bound over the feasible set, which
        cannot happen for the PSD-plus-bounded problems this package builds.
    """
    t_start = time.perf_counter()
    h, f, a, b = _validate(problem)
    n = f.shape[0]
    p = a.shape[0]
    max_iter = ITERATION_CAP_FACTOR * (n + p + 2)
    total_iterations = 0

    z = (
        np.asarray(problem.start_point, dtype=float).ravel().copy()
        if problem.start_point is not None
        else np.zeros(n)
    )
    if z.shape[0] != n or not np.all(np.isfinite(z)):
        raise ValueError("start_point has wrong size or non-finite entries")

    violation = float(np.max(a @ z - b, initial=0.0))
    if violation > FEASIBILITY_TOL:
        z, violation, phase1_iters, hit_limit = _phase_one(a, b, z, max_iter)
        total_iterations += phase1_iters
        if violation > FEASIBILITY_TOL:
            status = QpStatus.ITERATION_LIMIT if hit_limit else QpStatus.INFEASIBLE
            objective = float(0.5 * z @ h @ z + f @ z)
            g = h @ z + f
            return QpSolution(
                z=z,
                status=status,
                objective=objective,
                kkt_stationarity=float(np.max(np.abs(g), initial=0.0)),
                kkt_feasibility=float(np.max(a @ z - b, initial=0.0)),
                active_set=(),
                iterations=total_iterations,
                solve_time=time.perf_counter() - t_start,
                multipliers=np.zeros(p),
            )

    preferred = problem.warm_active_set or ()
    work = _independent_tight_rows(a, b, z, preferred) if p else []
    z, work, phase2_iters, hit_limit = _active_set_iterate(h, f, a, b, z, work, max_iter)
    total_iterations += phase2_iters

    g = h @ z + f
    lam_work = _multipliers(a[work] if work else a[:0], g)
    multipliers = np.zeros(p)
    for idx, row in enumerate(work):
        multipliers[row] = lam_work[idx]
    stationarity = float(
        np.max(np.abs(g + (a.T @ multipliers if p else 0.0)), initial=0.0)
    )
    feasibility = float(np.max(a @ z - b, initial=0.0)) if p else 0.0
    status = QpStatus.ITERATION_LIMIT if hit_limit else QpStatus.OPTIMAL
    return QpSolution(
        z=z,
        status=status,
        objective=float(0.5 * z @ h @ z + f @ z),
        kkt_stationarity=stationarity,
        kkt_feasibility=max(feasibility, 0.0),
        active_set=tuple(sorted(work)),
        iterations=total_iterations,
        solve_time=time.perf_counter() - t_start,
        multipliers=multipliers,
    )
