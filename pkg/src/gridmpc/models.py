"""Frequency-dynamics models for one- and two-area grids with batteries.

The continuous-time models describe aggregated swing dynamics with load
self-regulation, a lossless (or slowly self-discharging) battery integrator,
and, for two areas, the electromechanical tie-line coupling through the
voltage-angle difference.

State conventions
-----------------
Frequency states are stored normalized: ``x = delta_f / f0`` where
``delta_f`` is the deviation from nominal frequency in Hz.  Battery state of
charge is dimensionless in ``[-1, 1]`` relative to half capacity.  The
two-area angle difference is kept in radians and left unwrapped during
integration.

* one area:  ``[freq_norm, soc]`` with inputs ``[power_dev, battery]``
* two areas: ``[freq_norm_1, soc_1, freq_norm_2, soc_2, angle_diff]`` with
  inputs ``[power_dev_1, battery_1, power_dev_2, battery_2]``

``power_dev`` is the net exogenous power deviation acting on an area in
per unit (faults, load changes, conventional generation response); the
battery input additionally integrates into the state of charge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import matrix_exponential

__all__ = [
    "AreaParams",
    "BatteryParams",
    "TieLineParams",
    "ContinuousModel",
    "DiscreteModel",
    "Plant",
    "build_one_area",
    "build_two_area_coupled",
    "discretize",
    "plant_derivative",
    "tie_line_power",
]


@dataclass(frozen=True)
class AreaParams:
    """Aggregated parameters of one control area.

    ``load_damping`` is the self-regulation constant relating frequency
    deviation in Hz to per-unit load relief; larger values mean weaker
    natural damping.
    """

    f0_hz: float = 50.0
    inertia_s: float = 6.0
    base_power_pu: float = 1.0
    load_damping: float = 66.67

    def __post_init__(self):
        for name in ("f0_hz", "inertia_s", "base_power_pu", "load_damping"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def freq_decay(self) -> float:
        """Self-regulation decay rate of the frequency state (1/s)."""
        return -self.f0_hz / (2.0 * self.inertia_s * self.base_power_pu * self.load_damping)

    @property
    def input_gain(self) -> float:
        """Gain from per-unit power imbalance to frequency slew (Hz/s)."""
        return self.f0_hz / (2.0 * self.inertia_s * self.base_power_pu)


@dataclass(frozen=True)
class BatteryParams:
    """Battery storage ratings in per unit of the area base.

    ``capacity_pu_s`` is the energy capacity expressed as seconds of base
    power; state of charge moves by ``power * dt / capacity_pu_s``.
    ``self_discharge_pu`` is a parasitic leak proportional to the state of
    charge (zero by default).
    """

    capacity_pu_s: float = 50.0
    self_discharge_pu: float = 0.0
    power_min_pu: float = -0.15
    power_max_pu: float = 0.15
    soc_min: float = -0.75
    soc_max: float = 0.75
    ramp_per_step_pu: float = 1.0

    def __post_init__(self):
        if not self.capacity_pu_s > 0.0:
            raise ValueError("capacity_pu_s must be positive")
        if not self.power_min_pu < self.power_max_pu:
            raise ValueError(
                f"power bounds must satisfy min < max, got "
                f"[{self.power_min_pu}, {self.power_max_pu}]"
            )
        if not self.soc_min < self.soc_max:
            raise ValueError(
                f"soc bounds must satisfy min < max, got [{self.soc_min}, {self.soc_max}]"
            )
        if not self.ramp_per_step_pu > 0.0:
            raise ValueError("ramp_per_step_pu must be positive")


@dataclass(frozen=True)
class TieLineParams:
    """Tie-line rating; transported power is ``max_transfer_pu * sin(angle)``."""

    max_transfer_pu: float = 0.2

    def __post_init__(self):
        if not self.max_transfer_pu > 0.0:
            raise ValueError("max_transfer_pu must be positive")


@dataclass
class ContinuousModel:
    """Linear dynamics ``x_dot = a x + b u`` with labeled states and inputs."""

    a: np.ndarray
    b: np.ndarray
    state_labels: tuple[str, ...]
    input_labels: tuple[str, ...]

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError("a must be square")
        if self.b.shape[0] != n:
            raise ValueError("b row count must match state count")
        if len(self.state_labels) != n or len(self.input_labels) != self.b.shape[1]:
            raise ValueError("label counts must match matrix dimensions")


@dataclass
class DiscreteModel:
    """Zero-order-hold discretization ``x[k+1] = a_d x[k] + b_d u[k]``."""

    a_d: np.ndarray
    b_d: np.ndarray
    ts: float
    state_labels: tuple[str, ...]
    input_labels: tuple[str, ...]


@dataclass(frozen=True)
class Plant:
    """Physical system simulated by the closed loop.

    Holds per-area parameters plus the optional tie line.  With ``tie`` set
    the plant is the nonlinear two-area system (sinusoidal tie-line power);
    without it, a single decoupled area.
    """

    areas: tuple[AreaParams, ...]
    batteries: tuple[BatteryParams, ...]
    tie: TieLineParams | None = None

    def __post_init__(self):
        if len(self.areas) not in (1, 2):
            raise ValueError("plant supports one or two areas")
        if len(self.batteries) != len(self.areas):
            raise ValueError("one battery per area required")
        if len(self.areas) == 2:
            if self.tie is None:
                raise ValueError("two-area plant requires tie-line parameters")
            if self.areas[0].f0_hz != self.areas[1].f0_hz:
                raise ValueError("areas must share the nominal frequency")
        elif self.tie is not None:
            raise ValueError("tie-line parameters given for a one-area plant")

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def n_states(self) -> int:
        return 2 if self.n_areas == 1 else 5

    @property
    def state_labels(self) -> tuple[str, ...]:
        if self.n_areas == 1:
            return ("freq_norm", "soc")
        return ("freq_norm_1", "soc_1", "freq_norm_2", "soc_2", "angle_diff")


def build_one_area(area: AreaParams, battery: BatteryParams) -> ContinuousModel:
    """Linear one-area model in normalized coordinates.

    The frequency row is the swing equation divided by ``f0``, so both the
    exogenous power deviation and the battery injection act through
    ``input_gain / f0``; the battery input additionally drains the state of
    charge through ``-1 / capacity``.
    """
    gain = area.input_gain / area.f0_hz
    cap = battery.capacity_pu_s
    a = np.array(
        [
            [area.freq_decay, 0.0],
            [0.0, -battery.self_discharge_pu / cap],
        ]
    )
    b = np.array(
        [
            [gain, gain],
            [0.0, -1.0 / cap],
        ]
    )
    return ContinuousModel(a, b, ("freq_norm", "soc"), ("power_dev", "battery"))


def build_two_area_coupled(
    areas: tuple[AreaParams, AreaParams],
    batteries: tuple[BatteryParams, BatteryParams],
    tie: TieLineParams,
) -> ContinuousModel:
    """Linearized two-area model with tie-line coupling.

    Linearizing the sinusoidal tie-line power around zero angle couples each
    frequency row to the angle state with gain ``-+ input_gain * max_transfer
    / f0``, and the angle integrates the frequency split with gain
    ``2 pi f0`` in normalized coordinates.
    """
    a1, a2 = areas
    if a1.f0_hz != a2.f0_hz:
        raise ValueError("areas must share the nominal frequency")
    f0 = a1.f0_hz
    g1 = a1.input_gain / f0
    g2 = a2.input_gain / f0
    c1, c2 = batteries[0].capacity_pu_s, batteries[1].capacity_pu_s
    pt = tie.max_transfer_pu
    a = np.array(
        [
            [a1.freq_decay, 0.0, 0.0, 0.0, -g1 * pt],
            [0.0, -batteries[0].self_discharge_pu / c1, 0.0, 0.0, 0.0],
            [0.0, 0.0, a2.freq_decay, 0.0, g2 * pt],
            [0.0, 0.0, 0.0, -batteries[1].self_discharge_pu / c2, 0.0],
            [2.0 * math.pi * f0, 0.0, -2.0 * math.pi * f0, 0.0, 0.0],
        ]
    )
    b = np.array(
        [
            [g1, g1, 0.0, 0.0],
            [0.0, -1.0 / c1, 0.0, 0.0],
            [0.0, 0.0, g2, g2],
            [0.0, 0.0, 0.0, -1.0 / c2],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    labels = ("freq_norm_1", "soc_1", "freq_norm_2", "soc_2", "angle_diff")
    inputs = ("power_dev_1", "battery_1", "power_dev_2", "battery_2")
    return ContinuousModel(a, b, labels, inputs)


def discretize(model: ContinuousModel, ts: float) -> DiscreteModel:
    """Exact zero-order-hold discretization via the augmented exponential.

    ``exp([[a, b], [0, 0]] * ts)`` contains ``a_d`` in the top-left block and
    ``b_d = integral(exp(a tau) d tau) b`` in the top-right block; no series
    truncation of the input integral is involved.
    """
    if not ts > 0.0:
        raise ValueError("ts must be positive")
    n = model.a.shape[0]
    m = model.b.shape[1]
    augmented = np.zeros((n + m, n + m))
    augmented[:n, :n] = model.a * ts
    augmented[:n, n:] = model.b * ts
    phi = matrix_exponential(augmented)
    return DiscreteModel(
        a_d=phi[:n, :n],
        b_d=phi[:n, n:],
        ts=ts,
        state_labels=model.state_labels,
        input_labels=model.input_labels,
    )


def tie_line_power(tie: TieLineParams, angle_diff: float) -> float:
    """Power flowing from area 1 to area 2 at the given angle difference."""
    return tie.max_transfer_pu * math.sin(angle_diff)


def plant_derivative(plant: Plant, state: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Right-hand side of the (possibly nonlinear) plant dynamics.

    Parameters
    ----------
    plant : Plant
        Physical parameters.
    state : ndarray
        Current state in the layout of ``plant.state_labels``.
    inputs : ndarray
        Per-area pairs ``[power_dev, battery]`` concatenated in area order.

    Notes
    -----
    For two areas the tie-line power uses the full sine of the angle
    difference, so the plant and the linearized controller model deliberately
    diverge at large angles.
    """
    state = np.asarray(state, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if plant.n_areas == 1:
        area, battery = plant.areas[0], plant.batteries[0]
        power_dev, u_batt = inputs
        gain = area.input_gain / area.f0_hz
        return np.array(
            [
                area.freq_decay * state[0] + gain * (power_dev + u_batt),
                -(battery.self_discharge_pu * state[1] + u_batt) / battery.capacity_pu_s,
            ]
        )

    a1, a2 = plant.areas
    b1, b2 = plant.batteries
    dp1, u1, dp2, u2 = inputs
    x1, soc1, x2, soc2, angle = state
    flow = tie_line_power(plant.tie, angle)
    g1 = a1.input_gain / a1.f0_hz
    g2 = a2.input_gain / a2.f0_hz
    return np.array(
        [
            a1.freq_decay * x1 + g1 * (dp1 + u1 - flow),
            -(b1.self_discharge_pu * soc1 + u1) / b1.capacity_pu_s,
            a2.freq_decay * x2 + g2 * (dp2 + u2 + flow),
            -(b2.self_discharge_pu * soc2 + u2) / b2.capacity_pu_s,
            2.0 * math.pi * a1.f0_hz * (x1 - x2),
        ]
    )
