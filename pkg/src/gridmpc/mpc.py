"""Model predictive frequency controllers with optional stability add-ons.

The controller solves, at every sample, a finite-horizon quadratic program
over the battery power sequence.  States are eliminated through prediction
matrices (condensed formulation), state bounds are softened by linearly
penalized slack variables, and input magnitude plus per-sample ramp bounds
are kept hard.  Two stability mechanisms can be layered on the basic
formulation:

* ``PASSIVITY`` adds one hard inequality on the first input sample that
  forces the battery power to oppose the measured frequency deviation
  strongly enough to make a quadratic storage function of the frequency
  states decay.
* ``CLF`` replaces the terminal state cost with a Lyapunov-matrix weight on
  the frequency states, computed from the discrete Lyapunov equation of the
  frequency subsystem, so that the terminal term prices the remaining
  uncontrolled decay of those states.

Disturbance input channels of the model (exogenous power deviations) are
assumed zero over the horizon; only the battery channels are decision
variables.  If the QP reports anything other than optimality the controller
falls back to a clamped proportional law on its local frequency states and
flags the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg import is_positive_semidefinite, solve_discrete_lyapunov
from .models import DiscreteModel
from .qp import FEASIBILITY_TOL, QpProblem, QpSolution, QpStatus, solve_qp

__all__ = [
    "MpcMode",
    "ControllerTopology",
    "MpcWeights",
    "MpcBounds",
    "MpcController",
    "StepDiagnostics",
    "build_prediction_matrices",
    "build_condensed_qp",
    "add_passivity_constraint",
    "clf_terminal_cost",
    "mpc_step",
]

# Default penalty per unit of state-bound violation (exact L1 penalty).
DEFAULT_SLACK_WEIGHT = 1e6
# Horizon range studied by the reference experiments; the lower bound is
# enforced, longer horizons are allowed for convergence studies.
MIN_HORIZON = 2


class MpcMode(Enum):
    STANDARD = "standard"
    PASSIVITY = "passivity"
    CLF = "clf"


class ControllerTopology(Enum):
    """What slice of the system a controller sees.

    ``TWO_AREA_LOCAL`` controllers run one per area on the decoupled local
    model; ``TWO_AREA_JOINT`` is a single controller on the full coupled
    model commanding both batteries.
    """

    ONE_AREA = "one_area"
    TWO_AREA_LOCAL = "two_area_local"
    TWO_AREA_JOINT = "two_area_joint"


@dataclass
class MpcWeights:
    """Stage cost weights ``x'Qx + u'Ru`` plus soft-constraint penalty.

    ``q_term`` is only used in CLF mode; when left unset the controller
    computes it from the frequency subsystem at construction time.
    """

    q: np.ndarray
    r: np.ndarray
    q_term: np.ndarray | None = None
    slack_weight: float = DEFAULT_SLACK_WEIGHT

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if not is_positive_semidefinite(self.q):
            raise ValueError("q must be positive semidefinite")
        try:
            np.linalg.cholesky(0.5 * (self.r + self.r.T))
        except np.linalg.LinAlgError:
            raise ValueError("r must be positive definite") from None
        if self.q_term is not None:
            self.q_term = np.atleast_2d(np.asarray(self.q_term, dtype=float))
            if not is_positive_semidefinite(self.q_term):
                raise ValueError("q_term must be positive semidefinite")
        if not self.slack_weight > 0.0:
            raise ValueError("slack_weight must be positive")


@dataclass
class MpcBounds:
    """State box (soft), input box and per-sample ramp limits (hard).

    State bounds may be infinite to drop the corresponding rows.  The ramp
    window must contain zero so that holding the previous input is always
    admissible.
    """

    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    du_min: np.ndarray
    du_max: np.ndarray

    def __post_init__(self):
        self.x_min = np.atleast_1d(np.asarray(self.x_min, dtype=float))
        self.x_max = np.atleast_1d(np.asarray(self.x_max, dtype=float))
        self.u_min = np.atleast_1d(np.asarray(self.u_min, dtype=float))
        self.u_max = np.atleast_1d(np.asarray(self.u_max, dtype=float))
        self.du_min = np.atleast_1d(np.asarray(self.du_min, dtype=float))
        self.du_max = np.atleast_1d(np.asarray(self.du_max, dtype=float))
        if np.any(self.x_min >= self.x_max):
            raise ValueError(
                f"x_min must lie below x_max, got {self.x_min} vs {self.x_max}"
            )
        if np.any(self.u_min >= self.u_max):
            raise ValueError(
                f"u_min must lie below u_max, got {self.u_min} vs {self.u_max}"
            )
        if np.any(self.du_min > 0.0) or np.any(self.du_max < 0.0):
            raise ValueError("ramp window [du_min, du_max] must contain zero")
        if np.any(self.u_min > 0.0) or np.any(self.u_max < 0.0):
            raise ValueError("input box [u_min, u_max] must contain zero")
        if not (np.all(np.isfinite(self.u_min)) and np.all(np.isfinite(self.u_max))):
            raise ValueError("u_min and u_max must be finite")


@dataclass
class StepDiagnostics:
    """Per-step solver outcome attached to the applied input."""

    status: QpStatus
    fallback_used: bool
    objective: float
    kkt_stationarity: float
    kkt_feasibility: float
    iterations: int
    solve_time: float


@dataclass
class _Condensed:
    """Cached condensed-QP pieces; only right-hand sides vary per step."""

    sx: np.ndarray
    su: np.ndarray
    hessian: np.ndarray
    f_const: np.ndarray
    f_x: np.ndarray          # f = f_const + f_x @ x0
    a: np.ndarray
    b_const: np.ndarray
    b_x: np.ndarray          # b = b_const + b_x @ x0 + b_uprev @ u_prev
    b_uprev: np.ndarray
    n_u: int
    n_slack: int
    soft_rows: int


@dataclass
class MpcController:
    """Receding-horizon controller bound to one discrete-time model.

    ``ctrl_input_indices`` select the battery columns of the model input
    matrix; remaining channels are treated as zero-mean disturbances.  The
    i-th frequency state in ``freq_state_indices`` is paired with the i-th
    controlled input for the passivity constraint and the fallback law.
    """

    mode: MpcMode
    topology: ControllerTopology
    model: DiscreteModel
    horizon: int
    weights: MpcWeights
    bounds: MpcBounds
    ctrl_input_indices: tuple[int, ...]
    freq_state_indices: tuple[int, ...]
    fallback_gain: float = 1.0
    u_prev: np.ndarray | None = None
    _condensed: _Condensed | None = field(default=None, repr=False)
    _warm_set: tuple[int, ...] | None = field(default=None, repr=False)
    _last_u_plan: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        nx = self.model.a_d.shape[0]
        n_inputs = self.model.b_d.shape[1]
        if self.horizon < MIN_HORIZON:
            raise ValueError(f"horizon must be at least {MIN_HORIZON}, got {self.horizon}")
        self.ctrl_input_indices = tuple(int(i) for i in self.ctrl_input_indices)
        self.freq_state_indices = tuple(int(i) for i in self.freq_state_indices)
        if len(set(self.ctrl_input_indices)) != len(self.ctrl_input_indices):
            raise ValueError("ctrl_input_indices must be distinct")
        if any(i < 0 or i >= n_inputs for i in self.ctrl_input_indices):
            raise ValueError("ctrl_input_indices out of range")
        if any(i < 0 or i >= nx for i in self.freq_state_indices):
            raise ValueError("freq_state_indices out of range")
        if len(self.freq_state_indices) != len(self.ctrl_input_indices):
            raise ValueError("each frequency state needs a paired control input")
        nu = len(self.ctrl_input_indices)
        if self.weights.q.shape != (nx, nx):
            raise ValueError(f"q must be {nx}x{nx}")
        if self.weights.r.shape != (nu, nu):
            raise ValueError(f"r must be {nu}x{nu}")
        for name in ("x_min", "x_max"):
            if getattr(self.bounds, name).shape != (nx,):
                raise ValueError(f"{name} must have length {nx}")
        for name in ("u_min", "u_max", "du_min", "du_max"):
            if getattr(self.bounds, name).shape != (nu,):
                raise ValueError(f"{name} must have length {nu}")
        if self.u_prev is None:
            self.u_prev = np.zeros(nu)
        else:
            self.u_prev = np.asarray(self.u_prev, dtype=float).copy()
            if self.u_prev.shape != (nu,):
                raise ValueError(f"u_prev must have length {nu}")
            if np.any(self.u_prev < self.bounds.u_min) or np.any(self.u_prev > self.bounds.u_max):
                raise ValueError("u_prev must lie within the input box")
        if self.mode is MpcMode.CLF and self.weights.q_term is None:
            self.weights.q_term = clf_terminal_cost(
                self.model, self.weights.q, self.freq_state_indices
            )
        if self.weights.q_term is not None and self.weights.q_term.shape != (nx, nx):
            raise ValueError(f"q_term must be {nx}x{nx}")

    @property
    def n_ctrl(self) -> int:
        return len(self.ctrl_input_indices)

    def reset(self, u_prev=None) -> None:
        """Clear warm-start memory and the previous-input state."""
        nu = self.n_ctrl
        self.u_prev = np.zeros(nu) if u_prev is None else np.asarray(u_prev, float).copy()
        self._warm_set = None
        self._last_u_plan = None


def build_prediction_matrices(
    a_d: np.ndarray, b_ctrl: np.ndarray, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked prediction of states 1..N from x0 and the input sequence.

    Returns ``(sx, su)`` such that ``X = sx @ x0 + su @ U`` where ``X``
    stacks the predicted states and ``U`` the inputs ``u_0 .. u_{N-1}``.
    Block row ``k`` of ``sx`` is ``a_d**(k+1)``; block ``(k, j)`` of ``su``
    is ``a_d**(k-j) @ b_ctrl`` for ``j <= k``.
    """
    nx = a_d.shape[0]
    nu = b_ctrl.shape[1]
    sx = np.zeros((horizon * nx, nx))
    su = np.zeros((horizon * nx, horizon * nu))
    power = np.eye(nx)
    powers = [power]
    for _ in range(horizon):
        power = a_d @ power
        powers.append(power)
    for k in range(horizon):
        sx[k * nx : (k + 1) * nx] = powers[k + 1]
        for j in range(k + 1):
            su[k * nx : (k + 1) * nx, j * nu : (j + 1) * nu] = powers[k - j] @ b_ctrl
    return sx, su


def clf_terminal_cost(
    model: DiscreteModel, q: np.ndarray, freq_state_indices
) -> np.ndarray:
    """Terminal weight from the Lyapunov equation of the frequency subsystem.

    The smallest subsystem of ``a_d`` that contains the frequency states and
    is closed under the dynamics (for coupled areas this pulls in the angle
    state) is extracted, the discrete Lyapunov equation ``A X A' - X + Q_sub
    = 0`` is solved on it, and the frequency-frequency block of the solution
    is embedded into a full-size matrix with zeros elsewhere.

    Raises the underlying instability error when the subsystem is not
    strictly stable.
    """
    a_d = np.asarray(model.a_d, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    nx = a_d.shape[0]
    subsystem = list(dict.fromkeys(int(i) for i in freq_state_indices))
    # Close the index set under the dynamics coupling.
    changed = True
    while changed:
        changed = False
        for i in list(subsystem):
            for j in range(nx):
                if j not in subsystem and abs(a_d[i, j]) > 1e-14:
                    subsystem.append(j)
                    changed = True
    subsystem = sorted(subsystem)
    idx = np.ix_(subsystem, subsystem)
    x_sub = solve_discrete_lyapunov(a_d[idx], q[idx])

    q_term = np.zeros((nx, nx))
    freq = [int(i) for i in freq_state_indices]
    positions = [subsystem.index(i) for i in freq]
    for a_pos, a_state in zip(positions, freq):
        for b_pos, b_state in zip(positions, freq):
            q_term[a_state, b_state] = x_sub[a_pos, b_pos]
    return q_term


def _condense(ctrl: MpcController) -> _Condensed:
    model = ctrl.model
    n = ctrl.horizon
    nx = model.a_d.shape[0]
    nu = ctrl.n_ctrl
    b_ctrl = model.b_d[:, list(ctrl.ctrl_input_indices)]
    sx, su = build_prediction_matrices(model.a_d, b_ctrl, n)

    q_bar = np.zeros((n * nx, n * nx))
    r_bar = np.zeros((n * nu, n * nu))
    for k in range(n):
        terminal = k == n - 1
        if ctrl.mode is MpcMode.CLF and terminal:
            # Terminal state weight replaces the stage state cost; input
            # penalties stay on every sample.
            q_bar[k * nx : (k + 1) * nx, k * nx : (k + 1) * nx] = ctrl.weights.q_term
        else:
            q_bar[k * nx : (k + 1) * nx, k * nx : (k + 1) * nx] = ctrl.weights.q
        r_bar[k * nu : (k + 1) * nu, k * nu : (k + 1) * nu] = ctrl.weights.r

    n_u = n * nu
    qsu = q_bar @ su
    h_uu = 2.0 * (su.T @ qsu + r_bar)
    f_x_u = 2.0 * (qsu.T @ sx)

    # Soft state rows: one slack per finite bound per predicted step.
    upper_rows, upper_const = [], []
    lower_rows, lower_const = [], []
    x_max = ctrl.bounds.x_max
    x_min = ctrl.bounds.x_min
    for k in range(n):
        for i in range(nx):
            row = k * nx + i
            if np.isfinite(x_max[i]):
                upper_rows.append(row)
                upper_const.append(x_max[i])
            if np.isfinite(x_min[i]):
                lower_rows.append(row)
                lower_const.append(-x_min[i])
    n_soft = len(upper_rows) + len(lower_rows)
    n_slack = n_soft
    n_total = n_u + n_slack

    blocks_a, blocks_const = [], []
    b_x_blocks, b_uprev_blocks = [], []

    def _zeros_rows(count):
        return np.zeros((count, nx)), np.zeros((count, nu))

    # Upper state rows:  su U - s <= x_max - sx x0
    if upper_rows:
        a_up = np.zeros((len(upper_rows), n_total))
        a_up[:, :n_u] = su[upper_rows]
        a_up[np.arange(len(upper_rows)), n_u + np.arange(len(upper_rows))] = -1.0
        blocks_a.append(a_up)
        blocks_const.append(np.asarray(upper_const))
        bx, bu = _zeros_rows(len(upper_rows))
        b_x_blocks.append(-sx[upper_rows])
        b_uprev_blocks.append(bu)
    # Lower state rows: -su U - s <= -x_min + sx x0
    if lower_rows:
        a_lo = np.zeros((len(lower_rows), n_total))
        a_lo[:, :n_u] = -su[lower_rows]
        a_lo[np.arange(len(lower_rows)), n_u + len(upper_rows) + np.arange(len(lower_rows))] = -1.0
        blocks_a.append(a_lo)
        blocks_const.append(np.asarray(lower_const))
        b_x_blocks.append(sx[lower_rows])
        b_uprev_blocks.append(np.zeros((len(lower_rows), nu)))

    # Hard input box rows.
    eye_u = np.eye(n_u)
    a_box = np.zeros((2 * n_u, n_total))
    a_box[:n_u, :n_u] = eye_u
    a_box[n_u:, :n_u] = -eye_u
    blocks_a.append(a_box)
    blocks_const.append(
        np.concatenate([np.tile(ctrl.bounds.u_max, n), -np.tile(ctrl.bounds.u_min, n)])
    )
    bx, bu = _zeros_rows(2 * n_u)
    b_x_blocks.append(bx)
    b_uprev_blocks.append(bu)

    # Hard ramp rows; the first sample references the previous applied input.
    diff = np.zeros((n_u, n_u))
    diff[:nu, :nu] = np.eye(nu)
    for k in range(1, n):
        diff[k * nu : (k + 1) * nu, k * nu : (k + 1) * nu] = np.eye(nu)
        diff[k * nu : (k + 1) * nu, (k - 1) * nu : k * nu] = -np.eye(nu)
    a_ramp = np.zeros((2 * n_u, n_total))
    a_ramp[:n_u, :n_u] = diff
    a_ramp[n_u:, :n_u] = -diff
    blocks_a.append(a_ramp)
    blocks_const.append(
        np.concatenate([np.tile(ctrl.bounds.du_max, n), -np.tile(ctrl.bounds.du_min, n)])
    )
    bx, bu = _zeros_rows(2 * n_u)
    bu_up = np.zeros((n_u, nu))
    bu_up[:nu] = np.eye(nu)
    bu_dn = np.zeros((n_u, nu))
    bu_dn[:nu] = -np.eye(nu)
    b_x_blocks.append(bx)
    b_uprev_blocks.append(np.vstack([bu_up, bu_dn]))

    # Slack nonnegativity.
    if n_slack:
        a_slack = np.zeros((n_slack, n_total))
        a_slack[:, n_u:] = -np.eye(n_slack)
        blocks_a.append(a_slack)
        blocks_const.append(np.zeros(n_slack))
        bx, bu = _zeros_rows(n_slack)
        b_x_blocks.append(bx)
        b_uprev_blocks.append(bu)

    hessian = np.zeros((n_total, n_total))
    hessian[:n_u, :n_u] = 0.5 * (h_uu + h_uu.T)
    f_const = np.concatenate([np.zeros(n_u), np.full(n_slack, ctrl.weights.slack_weight)])
    f_x = np.vstack([f_x_u, np.zeros((n_slack, nx))])

    return _Condensed(
        sx=sx,
        su=su,
        hessian=hessian,
        f_const=f_const,
        f_x=f_x,
        a=np.vstack(blocks_a),
        b_const=np.concatenate(blocks_const),
        b_x=np.vstack(b_x_blocks),
        b_uprev=np.vstack(b_uprev_blocks),
        n_u=n_u,
        n_slack=n_slack,
        soft_rows=n_soft,
    )


def _condensed(ctrl: MpcController) -> _Condensed:
    if ctrl._condensed is None:
        ctrl._condensed = _condense(ctrl)
    return ctrl._condensed


def build_condensed_qp(ctrl: MpcController, x0: np.ndarray) -> QpProblem:
    """Condensed QP over ``[U; slacks]`` for the measured state ``x0``."""
    x0 = np.asarray(x0, dtype=float).ravel()
    nx = ctrl.model.a_d.shape[0]
    if x0.shape != (nx,):
        raise ValueError(f"x0 must have length {nx}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 contains non-finite entries")
    cache = _condensed(ctrl)
    f = cache.f_const + cache.f_x @ x0
    b = cache.b_const + cache.b_x @ x0 + cache.b_uprev @ ctrl.u_prev
    return QpProblem(
        hessian=cache.hessian,
        linear=f,
        ineq_a=cache.a,
        ineq_b=b,
    )


def _passivity_row(ctrl: MpcController, x0: np.ndarray, n_total: int) -> tuple[np.ndarray, float]:
    row = np.zeros(n_total)
    rhs = 0.0
    for pos, state in enumerate(ctrl.freq_state_indices):
        row[pos] = x0[state]
        rhs -= x0[state] ** 2
    return row, rhs


def add_passivity_constraint(
    problem: QpProblem, ctrl: MpcController, x0: np.ndarray
) -> QpProblem:
    """Append the first-sample passivity inequality to a condensed QP.

    The row reads ``sum_i u_i(0) x_i(0) <= -sum_i x_i(0)^2`` over the paired
    (frequency state, battery input) sets, which forces the applied battery
    power to oppose the measured frequency deviation with at least matching
    magnitude.  At zero frequency deviation the row is trivially satisfied.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n_total = problem.ineq_a.shape[1]
    row, rhs = _passivity_row(ctrl, x0, n_total)
    return QpProblem(
        hessian=problem.hessian,
        linear=problem.linear,
        ineq_a=np.vstack([problem.ineq_a, row[None, :]]),
        ineq_b=np.concatenate([problem.ineq_b, [rhs]]),
        warm_active_set=problem.warm_active_set,
        start_point=problem.start_point,
    )


def _first_step_window(ctrl: MpcController) -> tuple[np.ndarray, np.ndarray]:
    lo = np.maximum(ctrl.bounds.u_min, ctrl.u_prev + ctrl.bounds.du_min)
    hi = np.minimum(ctrl.bounds.u_max, ctrl.u_prev + ctrl.bounds.du_max)
    return lo, hi


def _feasible_start(ctrl: MpcController, x0: np.ndarray, cache: _Condensed):
    """Construct a feasible point, or None when provably infeasible.

    Inputs are chain-clamped into the box/ramp windows starting from the
    shifted previous plan; the first sample is additionally pulled toward the
    passivity extreme when that row is present.  Slacks are then set to the
    exact state-bound violations.
    """
    n = ctrl.horizon
    nu = ctrl.n_ctrl
    plan = np.zeros((n, nu))
    if ctrl._last_u_plan is not None and ctrl._last_u_plan.shape == (n, nu):
        plan[:-1] = ctrl._last_u_plan[1:]
        plan[-1] = ctrl._last_u_plan[-1]

    lo0, hi0 = _first_step_window(ctrl)
    u0 = np.clip(plan[0], lo0, hi0)
    if ctrl.mode is MpcMode.PASSIVITY:
        coeff = np.array([x0[i] for i in ctrl.freq_state_indices])
        rhs = -float(np.sum(coeff**2))
        extreme = np.where(coeff > 0.0, lo0, hi0)
        best = float(coeff @ extreme)
        if best > rhs + FEASIBILITY_TOL:
            return None
        current = float(coeff @ u0)
        if current > rhs:
            span = current - best
            t = 1.0 if span <= 0.0 else min(1.0, (current - rhs) / span)
            u0 = (1.0 - t) * u0 + t * extreme
    plan[0] = u0
    for k in range(1, n):
        lo = np.maximum(ctrl.bounds.u_min, plan[k - 1] + ctrl.bounds.du_min)
        hi = np.minimum(ctrl.bounds.u_max, plan[k - 1] + ctrl.bounds.du_max)
        plan[k] = np.clip(plan[k], lo, hi)

    u_vec = plan.ravel()
    z = np.zeros(cache.n_u + cache.n_slack)
    z[: cache.n_u] = u_vec
    if cache.n_slack:
        # Soft rows sit first in the constraint stack; violations become the
        # starting slacks.
        b = cache.b_const + cache.b_x @ x0 + cache.b_uprev @ ctrl.u_prev
        soft_a = cache.a[: cache.soft_rows, : cache.n_u]
        violation = soft_a @ u_vec - b[: cache.soft_rows]
        z[cache.n_u :] = np.maximum(violation, 0.0)
    return z


def _fallback_input(ctrl: MpcController, x0: np.ndarray) -> np.ndarray:
    lo, hi = _first_step_window(ctrl)
    local = np.array([x0[i] for i in ctrl.freq_state_indices])
    return np.clip(-ctrl.fallback_gain * local, lo, hi)


def mpc_step(ctrl: MpcController, x0: np.ndarray) -> tuple[np.ndarray, StepDiagnostics]:
    """Solve one receding-horizon step and return the input to apply.

    The returned input is the first sample of the optimal plan, clamped into
    the intersection of the input box and the ramp window around the
    previously applied input.  On infeasibility or iteration exhaustion the
    proportional fallback is applied instead and flagged in the diagnostics.
    ``u_prev`` is updated in every path.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    cache = _condensed(ctrl)
    problem = build_condensed_qp(ctrl, x0)
    if ctrl.mode is MpcMode.PASSIVITY:
        problem = add_passivity_constraint(problem, ctrl, x0)

    start = _feasible_start(ctrl, x0, cache)
    if start is None:
        # The passivity row cannot be met within the input window.
        u_apply = _fallback_input(ctrl, x0)
        ctrl.u_prev = u_apply.copy()
        ctrl._last_u_plan = np.tile(u_apply, (ctrl.horizon, 1))
        ctrl._warm_set = None
        return u_apply, StepDiagnostics(
            status=QpStatus.INFEASIBLE,
            fallback_used=True,
            objective=math.nan,
            kkt_stationarity=math.nan,
            kkt_feasibility=math.nan,
            iterations=0,
            solve_time=0.0,
        )

    problem.start_point = start
    problem.warm_active_set = ctrl._warm_set
    solution = solve_qp(problem)

    nu = ctrl.n_ctrl
    if solution.status is QpStatus.OPTIMAL:
        lo, hi = _first_step_window(ctrl)
        u_apply = np.clip(solution.z[:nu], lo, hi)
        ctrl._last_u_plan = solution.z[: cache.n_u].reshape(ctrl.horizon, nu).copy()
        ctrl._warm_set = solution.active_set
        fallback = False
    else:
        u_apply = _fallback_input(ctrl, x0)
        ctrl._last_u_plan = np.tile(u_apply, (ctrl.horizon, 1))
        ctrl._warm_set = None
        fallback = True
    ctrl.u_prev = u_apply.copy()
    return u_apply, StepDiagnostics(
        status=solution.status,
        fallback_used=fallback,
        objective=solution.objective,
        kkt_stationarity=solution.kkt_stationarity,
        kkt_feasibility=solution.kkt_feasibility,
        iterations=solution.iterations,
        solve_time=solution.solve_time,
    )
