"""Closed-loop simulation of the frequency-control system.

The loop runs at a fixed control period: measure the full plant state,
let the assigned controllers compute their inputs from measurements only
(they never see fault values, present or future), hold every input
zero-order, then integrate the nonlinear plant with a classical fixed-step
4th-order scheme at a finer substep.  Traces record one row per control
period plus the terminal state.

Controller wiring per scenario:

* ``NONE`` applies zero input (open loop).
* ``CONVENTIONAL`` runs droop plus PI-on-ACE per area, acting through the
  area power-balance channel (no battery).
* MPC variants drive the batteries.  Two-area scenarios run either one
  joint controller on the coupled model (coordinated) or one controller
  per area on its local model without any tie representation
  (uncoordinated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conventional import (
    ConventionalParams,
    ConventionalState,
    area_control_error,
    default_params,
    primary_power,
    secondary_step,
)
from .faults import generate_fault
from .models import (
    AreaParams,
    BatteryParams,
    Plant,
    TieLineParams,
    build_one_area,
    build_two_area_coupled,
    discretize,
    plant_derivative,
    tie_line_power,
)
from .mpc import (
    ControllerTopology,
    MpcBounds,
    MpcController,
    MpcMode,
    MpcWeights,
    mpc_step,
)
from .qp import QpStatus

__all__ = [
    "Topology",
    "ControlKind",
    "ControlConfig",
    "Scenario",
    "SimTrace",
    "NonFiniteStateError",
    "integrate_plant",
    "run_closed_loop",
    "default_mpc_weights",
    "default_mpc_bounds",
    "STATE_LIMIT",
]

# Integration aborts once any state magnitude reaches this runaway bound.
STATE_LIMIT = 1e6
# Soft bound on the normalized frequency deviation (0.03 = 1.5 Hz at 50 Hz).
FREQ_BOUND_NORM = 0.03
# Terminal-angle stage weight used by the coordinated controller.
ANGLE_WEIGHT = 0.1
# Status codes recorded per controller slot and sample.
STATUS_NONE = 0
STATUS_OPTIMAL = 1
STATUS_INFEASIBLE = 2
STATUS_ITERATION_LIMIT = 3

_STATUS_CODE = {
    QpStatus.OPTIMAL: STATUS_OPTIMAL,
    QpStatus.INFEASIBLE: STATUS_INFEASIBLE,
    QpStatus.ITERATION_LIMIT: STATUS_ITERATION_LIMIT,
}


class Topology(Enum):
    ONE_AREA = "one-area"
    TWO_AREA = "two-area"


class ControlKind(Enum):
    NONE = "none"
    CONVENTIONAL = "conventional"
    MPC_STANDARD = "mpc-standard"
    MPC_PASSIVITY = "mpc-passivity"
    MPC_CLF = "mpc-clf"


_MPC_KINDS = {
    ControlKind.MPC_STANDARD: MpcMode.STANDARD,
    ControlKind.MPC_PASSIVITY: MpcMode.PASSIVITY,
    ControlKind.MPC_CLF: MpcMode.CLF,
}


class NonFiniteStateError(Exception):
    """Raised when the integrated state runs away; may carry a partial trace."""

    def __init__(self, message: str, partial_trace: "SimTrace | None" = None):
        super().__init__(message)
        self.partial_trace = partial_trace


@dataclass(frozen=True)
class ControlConfig:
    """What controls the scenario and how the controllers are tuned.

    ``coordinated`` only applies to MPC on two areas.  ``weights`` and
    ``bounds`` override the defaults built from the scenario parameters;
    for uncoordinated two-area control the same (local, 2-state) settings
    apply to both controllers.
    """

    kind: ControlKind = ControlKind.NONE
    coordinated: bool = False
    horizon: int = 3
    slack_weight: float = 1e6
    fallback_gain: float = 1.0
    weights: MpcWeights | None = None
    bounds: MpcBounds | None = None
    conventional: ConventionalParams | None = None

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if not self.slack_weight > 0.0:
            raise ValueError("slack_weight must be positive")


@dataclass(frozen=True)
class Scenario:
    """Declarative description of one closed-loop run."""

    topology: Topology
    areas: tuple
    batteries: tuple
    tie: TieLineParams | None = None
    control: ControlConfig = field(default_factory=ControlConfig)
    faults: tuple = ()
    duration: float = 100.0
    ts: float = 0.1
    dt: float = 0.01
    seed: int = 0
    initial_state: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "areas", tuple(self.areas))
        object.__setattr__(self, "batteries", tuple(self.batteries))
        n = {Topology.ONE_AREA: 1, Topology.TWO_AREA: 2}[self.topology]
        if len(self.areas) != n or len(self.batteries) != n:
            raise ValueError(f"{self.topology.value} needs exactly {n} area(s)")
        if self.topology is Topology.TWO_AREA and self.tie is None:
            raise ValueError("two-area scenarios need tie-line parameters")
        if self.topology is Topology.ONE_AREA and self.tie is not None:
            raise ValueError("one-area scenarios must not define a tie line")
        faults = tuple(self.faults) if self.faults else (None,) * n
        if len(faults) != n:
            raise ValueError(f"need one fault slot per area, got {len(faults)}")
        object.__setattr__(self, "faults", faults)
        if not (self.ts > 0.0 and self.dt > 0.0):
            raise ValueError("ts and dt must be positive")
        substeps = round(self.ts / self.dt)
        if substeps < 1 or abs(substeps * self.dt - self.ts) > 1e-9:
            raise ValueError(f"dt={self.dt} must divide ts={self.ts} exactly")
        steps = round(self.duration / self.ts)
        if steps < 1 or abs(steps * self.ts - self.duration) > 1e-9:
            raise ValueError(
                f"duration={self.duration} must be a positive multiple of ts={self.ts}"
            )
        if self.control.coordinated and self.topology is not Topology.TWO_AREA:
            raise ValueError("coordinated control requires two areas")
        if self.initial_state is not None:
            x0 = tuple(float(v) for v in self.initial_state)
            if len(x0) != (2 if n == 1 else 5):
                raise ValueError("initial_state length does not match the topology")
            object.__setattr__(self, "initial_state", x0)

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.ts)

    @property
    def substeps(self) -> int:
        return round(self.ts / self.dt)


@dataclass
class SimTrace:
    """Per-control-period series plus the terminal state.

    Row ``k`` holds the measurement at ``time[k]``, the inputs held over
    ``[time[k], time[k] + ts)``, and the solver diagnostics of that step.
    Controller-slot arrays have one column per area; a joint controller
    reports in column 0.  ``angle_diff`` is the raw (unwrapped) angle
    state, so losing synchronism shows up as accumulated whole turns.
    """

    ts: float
    state_labels: tuple
    time: np.ndarray
    freq_hz: np.ndarray
    soc: np.ndarray
    u_applied: np.ndarray
    u_secondary: np.ndarray
    fault: np.ndarray
    angle_diff: np.ndarray
    tie_power: np.ndarray
    status: np.ndarray
    objective: np.ndarray
    solve_time: np.ndarray
    fallback: np.ndarray
    final_state: np.ndarray
    completed: bool

    @property
    def n_areas(self) -> int:
        return self.freq_hz.shape[1]

    @property
    def n_samples(self) -> int:
        return self.time.shape[0]


def default_mpc_weights(n_states: int) -> MpcWeights:
    """Stage weights for the 2-state local or 5-state coupled model."""
    if n_states == 2:
        return MpcWeights(q=np.diag([10.0, 0.001]), r=np.array([[1.0]]))
    if n_states == 5:
        return MpcWeights(
            q=np.diag([10.0, 0.001, 10.0, 0.001, ANGLE_WEIGHT]), r=np.eye(2)
        )
    raise ValueError(f"no default weights for {n_states} states")


def default_mpc_bounds(batteries: tuple, *, coupled: bool) -> MpcBounds:
    """State/input boxes from the battery ratings and the frequency band."""
    def area_state_bounds(battery):
        return (
            [-FREQ_BOUND_NORM, battery.soc_min],
            [FREQ_BOUND_NORM, battery.soc_max],
        )

    x_min, x_max = [], []
    for battery in batteries:
        lo, hi = area_state_bounds(battery)
        x_min.extend(lo)
        x_max.extend(hi)
    if coupled:
        x_min.append(-math.inf)
        x_max.append(math.inf)
    return MpcBounds(
        x_min=np.array(x_min),
        x_max=np.array(x_max),
        u_min=np.array([b.power_min_pu for b in batteries]),
        u_max=np.array([b.power_max_pu for b in batteries]),
        du_min=np.array([-b.ramp_per_step_pu for b in batteries]),
        du_max=np.array([b.ramp_per_step_pu for b in batteries]),
    )


def build_plant(scenario: Scenario) -> Plant:
    if scenario.topology is Topology.ONE_AREA:
        return Plant(areas=scenario.areas, batteries=scenario.batteries)
    return Plant(areas=scenario.areas, batteries=scenario.batteries, tie=scenario.tie)


def integrate_plant(
    plant: Plant, state: np.ndarray, inputs: np.ndarray, dt: float, substeps: int
) -> np.ndarray:
    """Advance the plant one control period under held inputs (RK4).

    Raises ``NonFiniteStateError`` as soon as any state magnitude reaches
    ``STATE_LIMIT`` or stops being finite.
    """
    x = np.asarray(state, dtype=float).copy()
    u = np.asarray(inputs, dtype=float)
    for _ in range(substeps):
        k1 = plant_derivative(plant, x, u)
        k2 = plant_derivative(plant, x + 0.5 * dt * k1, u)
        k3 = plant_derivative(plant, x + 0.5 * dt * k2, u)
        k4 = plant_derivative(plant, x + dt * k3, u)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) >= STATE_LIMIT:
            raise NonFiniteStateError("plant state ran away during integration")
    return x


class _MpcUnits:
    """MPC controllers plus their measurement/actuation wiring."""

    def __init__(self, scenario: Scenario, mode: MpcMode):
        cfg = scenario.control
        self.units = []
        if scenario.topology is Topology.ONE_AREA:
            model = discretize(
                build_one_area(scenario.areas[0], scenario.batteries[0]), scenario.ts
            )
            self.units.append(
                (
                    self._make(
                        mode, ControllerTopology.ONE_AREA, model, scenario.batteries,
                        cfg, joint=False,
                    ),
                    (0, 1),      # measurement indices
                    (0,),        # actuated areas
                )
            )
        elif cfg.coordinated:
            model = discretize(
                build_two_area_coupled(scenario.areas, scenario.batteries, scenario.tie),
                scenario.ts,
            )
            self.units.append(
                (
                    self._make(
                        mode, ControllerTopology.TWO_AREA_JOINT, model,
                        scenario.batteries, cfg, joint=True,
                    ),
                    (0, 1, 2, 3, 4),
                    (0, 1),
                )
            )
        else:
            # local controllers deliberately know nothing about the tie line
            for i in range(2):
                model = discretize(
                    build_one_area(scenario.areas[i], scenario.batteries[i]),
                    scenario.ts,
                )
                self.units.append(
                    (
                        self._make(
                            mode, ControllerTopology.TWO_AREA_LOCAL, model,
                            (scenario.batteries[i],), cfg, joint=False,
                        ),
                        (2 * i, 2 * i + 1),
                        (i,),
                    )
                )

    @staticmethod
    def _make(mode, topology, model, batteries, cfg, *, joint):
        n_states = model.a_d.shape[0]
        weights = cfg.weights
        if weights is None:
            weights = default_mpc_weights(n_states)
            weights = MpcWeights(
                q=weights.q, r=weights.r, slack_weight=cfg.slack_weight
            )
        bounds = cfg.bounds
        if bounds is None:
            bounds = default_mpc_bounds(tuple(batteries), coupled=joint)
        if joint:
            ctrl_inputs, freq_states = (1, 3), (0, 2)
        else:
            ctrl_inputs, freq_states = (1,), (0,)
        return MpcController(
            mode=mode,
            topology=topology,
            model=model,
            horizon=cfg.horizon,
            weights=weights,
            bounds=bounds,
            ctrl_input_indices=ctrl_inputs,
            freq_state_indices=freq_states,
            fallback_gain=cfg.fallback_gain,
        )


def run_closed_loop(scenario: Scenario) -> SimTrace:
    """Simulate the scenario and return its trace.

    On state runaway the partially filled trace (flagged ``completed =
    False``) rides along on the raised ``NonFiniteStateError``.
    """
    plant = build_plant(scenario)
    n = scenario.n_areas
    steps = scenario.n_steps
    f0 = scenario.areas[0].f0_hz
    cfg = scenario.control
    kind = cfg.kind

    x = np.zeros(plant.n_states)
    if scenario.initial_state is not None:
        x = np.array(scenario.initial_state, dtype=float)

    time = np.arange(steps) * scenario.ts
    freq_hz = np.zeros((steps, n))
    soc = np.zeros((steps, n))
    u_applied = np.zeros((steps, n))
    u_secondary = np.zeros((steps, n))
    fault_series = np.zeros((steps, n))
    angle_diff = np.zeros(steps)
    tie_power = np.zeros(steps)
    status = np.zeros((steps, n), dtype=np.int8)
    objective = np.full((steps, n), np.nan)
    solve_time = np.zeros((steps, n))
    fallback = np.zeros((steps, n), dtype=bool)

    mpc_units = None
    if kind in _MPC_KINDS:
        mpc_units = _MpcUnits(scenario, _MPC_KINDS[kind])
    conv_params = conv_states = None
    if kind is ControlKind.CONVENTIONAL:
        conv_params = [
            cfg.conventional or default_params(area.load_damping)
            for area in scenario.areas
        ]
        conv_states = [ConventionalState() for _ in range(n)]

    def snapshot(k):
        for i in range(n):
            freq_hz[k, i] = x[2 * i] * f0
            soc[k, i] = x[2 * i + 1]
        if n == 2:
            # raw integrator state: pole slips show up as accumulated turns
            angle_diff[k] = x[4]
            tie_power[k] = tie_line_power(scenario.tie, x[4])

    def partial(k):
        upto = slice(0, k + 1)
        return SimTrace(
            ts=scenario.ts,
            state_labels=plant.state_labels,
            time=time[upto].copy(),
            freq_hz=freq_hz[upto].copy(),
            soc=soc[upto].copy(),
            u_applied=u_applied[upto].copy(),
            u_secondary=u_secondary[upto].copy(),
            fault=fault_series[upto].copy(),
            angle_diff=angle_diff[upto].copy(),
            tie_power=tie_power[upto].copy(),
            status=status[upto].copy(),
            objective=objective[upto].copy(),
            solve_time=solve_time[upto].copy(),
            fallback=fallback[upto].copy(),
            final_state=x.copy(),
            completed=False,
        )

    for k in range(steps):
        t = float(time[k])
        snapshot(k)
        for i, spec in enumerate(scenario.faults):
            if spec is not None:
                fault_series[k, i] = generate_fault(spec, t)

        power_dev = fault_series[k].copy()
        battery = np.zeros(n)
        if kind is ControlKind.CONVENTIONAL:
            flow = tie_power[k] if n == 2 else 0.0
            for i in range(n):
                # export deviation: positive when sending more than scheduled
                tie_dev = flow if i == 0 else -flow
                ace = area_control_error(freq_hz[k, i], tie_dev, conv_params[i])
                u_sec, conv_states[i] = secondary_step(
                    conv_states[i], ace, scenario.ts, conv_params[i]
                )
                u_conv = primary_power(freq_hz[k, i], conv_params[i]) + u_sec
                u_secondary[k, i] = u_sec
                u_applied[k, i] = u_conv
                power_dev[i] += u_conv
        elif mpc_units is not None:
            for slot, (ctrl, meas_idx, area_idx) in enumerate(mpc_units.units):
                u, diag = mpc_step(ctrl, x[list(meas_idx)])
                for j, area in enumerate(area_idx):
                    battery[area] = u[j]
                    u_applied[k, area] = u[j]
                status[k, slot] = _STATUS_CODE[diag.status]
                objective[k, slot] = diag.objective
                solve_time[k, slot] = diag.solve_time
                fallback[k, slot] = diag.fallback_used

        inputs = np.empty(2 * n)
        inputs[0::2] = power_dev
        inputs[1::2] = battery
        try:
            x = integrate_plant(plant, x, inputs, scenario.dt, scenario.substeps)
        except NonFiniteStateError:
            raise NonFiniteStateError(
                f"state ran away during control period starting at t={t:.3f}s",
                partial_trace=partial(k),
            ) from None

    return SimTrace(
        ts=scenario.ts,
        state_labels=plant.state_labels,
        time=time,
        freq_hz=freq_hz,
        soc=soc,
        u_applied=u_applied,
        u_secondary=u_secondary,
        fault=fault_series,
        angle_diff=angle_diff,
        tie_power=tie_power,
        status=status,
        objective=objective,
        solve_time=solve_time,
        fallback=fallback,
        final_state=x.copy(),
        completed=True,
    )
