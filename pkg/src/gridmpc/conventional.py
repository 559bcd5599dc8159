"""Baseline droop and PI frequency controllers.

Primary control is an instantaneous proportional droop on the local
frequency deviation.  Secondary control is a PI law on the area control
error (ACE), which combines the tie-line exchange deviation with a biased
frequency term so that, in steady state, each area covers exactly its own
load imbalance.  The secondary output is clamped to a symmetric band with
conditional-integration anti-windup: the integrator only accumulates while
the output is inside the band or while the error drives it back toward the
band.

Sign conventions: frequency deviations are in Hz, powers in per-unit on the
area base.  ``tie_deviation`` is the area's excess export relative to
schedule, positive when exporting more than scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "ConventionalParams",
    "ConventionalState",
    "default_params",
    "primary_power",
    "area_control_error",
    "secondary_step",
]

# Nominal droop band: 200 mHz maps to 3000 MW of primary reserve, quoted on
# a 185 GW interconnection base.
DROOP_BAND_HZ = 0.2
DROOP_BAND_MW = 3000.0
SYSTEM_BASE_MW = 185000.0


@dataclass(frozen=True)
class ConventionalParams:
    """Gains of the droop and PI layers.

    ``droop_hz_per_pu`` is the frequency change that commands one per-unit
    of primary power; ``bias_pu_per_hz`` converts frequency deviation into
    the power bias term of the ACE.
    """

    droop_hz_per_pu: float
    t_n_s: float = 240.0
    c_p: float = 0.17
    bias_pu_per_hz: float = 0.0
    sec_limit_pu: float = 0.2

    def __post_init__(self):
        if not self.droop_hz_per_pu > 0.0:
            raise ValueError("droop must be positive")
        if not self.t_n_s > 0.0:
            raise ValueError("integral time constant must be positive")
        if self.c_p < 0.0:
            raise ValueError("proportional gain must be nonnegative")
        if not self.bias_pu_per_hz > 0.0:
            raise ValueError("bias must be positive")
        if not self.sec_limit_pu > 0.0:
            raise ValueError("secondary band must be positive")


@dataclass(frozen=True)
class ConventionalState:
    """Mutable-by-replacement controller memory (the ACE integral)."""

    ace_integral: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.ace_integral):
            raise ValueError("ace_integral must be finite")


def default_params(
    load_damping_hz_per_pu: float,
    *,
    droop_band_hz: float = DROOP_BAND_HZ,
    droop_band_mw: float = DROOP_BAND_MW,
    system_base_mw: float = SYSTEM_BASE_MW,
) -> ConventionalParams:
    """Gains on the per-unit base, with the bias computed self-consistently.

    The droop converts its MW rating to per-unit on the system base; the
    bias follows the classical network characteristic B = 1/S + 1/D_l so
    that the ACE of an undisturbed area vanishes in steady state.
    """
    droop = droop_band_hz * system_base_mw / droop_band_mw
    bias = 1.0 / droop + 1.0 / load_damping_hz_per_pu
    return ConventionalParams(droop_hz_per_pu=droop, bias_pu_per_hz=bias)


def primary_power(delta_f_hz: float, params: ConventionalParams) -> float:
    """Droop response: power opposing the frequency deviation."""
    return -delta_f_hz / params.droop_hz_per_pu


def area_control_error(
    delta_f_hz: float, tie_deviation_pu: float, params: ConventionalParams
) -> float:
    """ACE = tie exchange deviation plus frequency bias term."""
    return tie_deviation_pu + params.bias_pu_per_hz * delta_f_hz


def secondary_step(
    state: ConventionalState, ace_pu: float, dt_s: float, params: ConventionalParams
) -> tuple[float, ConventionalState]:
    """One PI update on the ACE; returns the secondary power command.

    Output is clamped to ``+/-sec_limit_pu``.  The integrator is committed
    only when the unsaturated output lies inside the band, or when the
    current error pushes a saturated output back toward the band
    (conditional integration).
    """
    if not dt_s > 0.0:
        raise ValueError("dt must be positive")
    integral = state.ace_integral + ace_pu * dt_s
    u = -params.c_p * ace_pu - integral / params.t_n_s
    limit = params.sec_limit_pu
    if u > limit:
        # integrate only when the error pulls the output back into the band
        commit = ace_pu > 0.0
        u = limit
    elif u < -limit:
        commit = ace_pu < 0.0
        u = -limit
    else:
        commit = True
    if not commit:
        integral = state.ace_integral
    return u, replace(state, ace_integral=integral)
