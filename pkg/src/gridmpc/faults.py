"""Exogenous power-imbalance signals applied to the plant.

All generators are deterministic pure functions of (spec, time) and are
evaluated only at control-period boundaries by the simulation (the plant
holds them zero-order like every other input).  Values are per-unit power
deviations; positive injects power into the area balance.

The asymmetric chirp is a phase-accumulating sinusoid whose instantaneous
frequency sweeps linearly across the active window.  Each cycle is
time-warped so the positive half-wave occupies ``duty_asymmetry`` of the
period; a duty below one half gives the waveform a negative running mean
(per-cycle mean is 2A(2d-1)/pi) on top of an optional linear dc drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "FaultKind",
    "AsymmetricChirp",
    "StepFault",
    "RampFault",
    "CompositeFault",
    "TabulatedFault",
    "load_fault_file",
    "generate_fault",
]


class FaultKind(Enum):
    ASYMMETRIC_CHIRP = "asymmetric-chirp"
    STEP = "step"
    RAMP = "ramp"
    COMPOSITE = "composite"
    FROM_FILE = "from-file"


def _check_window(t_on: float, t_off: float) -> None:
    if not (math.isfinite(t_on) and t_on >= 0.0):
        raise ValueError(f"t_on must be finite and nonnegative, got {t_on}")
    if not t_on < t_off:
        raise ValueError(f"fault window requires t_on < t_off, got [{t_on}, {t_off}]")


@dataclass(frozen=True)
class AsymmetricChirp:
    """Duty-warped swept sinusoid with dc drift, active on [t_on, t_off)."""

    amplitude: float
    f_start_hz: float
    f_end_hz: float
    t_on: float
    t_off: float
    duty_asymmetry: float = 0.5
    dc_drift: float = 0.0

    kind = FaultKind.ASYMMETRIC_CHIRP

    def __post_init__(self):
        _check_window(self.t_on, self.t_off)
        if not math.isfinite(self.t_off):
            raise ValueError("chirp window must be bounded")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")
        if not 0.0 < self.duty_asymmetry < 1.0:
            raise ValueError("duty_asymmetry must lie strictly inside (0, 1)")
        if self.f_start_hz < 0.0 or self.f_end_hz < 0.0:
            raise ValueError("sweep frequencies must be nonnegative")

    def _value(self, t: np.ndarray) -> np.ndarray:
        tau = t - self.t_on
        span = self.t_off - self.t_on
        # accumulated phase of the linear sweep
        theta = 2.0 * math.pi * (
            self.f_start_hz * tau
            + 0.5 * (self.f_end_hz - self.f_start_hz) * tau**2 / span
        )
        p = (theta / (2.0 * math.pi)) % 1.0
        d = self.duty_asymmetry
        wave = np.where(
            p < d,
            np.sin(math.pi * p / d),
            -np.sin(math.pi * (p - d) / (1.0 - d)),
        )
        value = self.amplitude * wave + self.dc_drift * tau
        return np.where((t >= self.t_on) & (t < self.t_off), value, 0.0)


@dataclass(frozen=True)
class StepFault:
    """Constant magnitude on [t_on, t_off); t_off may be infinite."""

    magnitude: float
    t_on: float = 0.0
    t_off: float = math.inf

    kind = FaultKind.STEP

    def __post_init__(self):
        _check_window(self.t_on, self.t_off)
        if not math.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")

    def _value(self, t: np.ndarray) -> np.ndarray:
        return np.where((t >= self.t_on) & (t < self.t_off), self.magnitude, 0.0)


@dataclass(frozen=True)
class RampFault:
    """Linear rise from zero at t_on to magnitude at t_off, held after."""

    magnitude: float
    t_on: float
    t_off: float

    kind = FaultKind.RAMP

    def __post_init__(self):
        _check_window(self.t_on, self.t_off)
        if not math.isfinite(self.t_off):
            raise ValueError("ramp end time must be finite")
        if not math.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")

    def _value(self, t: np.ndarray) -> np.ndarray:
        frac = np.clip((t - self.t_on) / (self.t_off - self.t_on), 0.0, 1.0)
        return self.magnitude * frac


@dataclass(frozen=True)
class CompositeFault:
    """Sum of component fault signals."""

    parts: tuple

    kind = FaultKind.COMPOSITE

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("composite fault needs at least one part")
        for part in self.parts:
            if not hasattr(part, "_value"):
                raise ValueError(f"not a fault spec: {part!r}")

    def _value(self, t: np.ndarray) -> np.ndarray:
        total = np.zeros_like(t, dtype=float)
        for part in self.parts:
            total = total + part._value(t)
        return total


@dataclass(frozen=True, eq=False)
class TabulatedFault:
    """Sampled signal with linear interpolation, zero outside the table."""

    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    source: str = "<memory>"

    kind = FaultKind.FROM_FILE

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or values.shape != times.shape:
            raise ValueError("times and values must be matching 1-D arrays")
        if times.size < 2:
            raise ValueError("tabulated fault needs at least two samples")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("tabulated fault contains non-finite entries")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("sample times must be strictly increasing")

    def _value(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)


def load_fault_file(path) -> TabulatedFault:
    """Parse a two-column time/power text file; rejected here, never mid-run.

    The first line may be a textual header; every other line must hold
    exactly two numbers separated by whitespace or a comma.
    """
    path = Path(path)
    try:
        raw_lines = path.read_text().splitlines()
    except OSError as exc:
        raise ValueError(f"cannot read fault file {path}: {exc}") from exc
    times, values = [], []
    for lineno, line in enumerate(raw_lines, start=1):
        text = line.strip()
        if not text:
            continue
        fields = text.replace(",", " ").split()
        try:
            numbers = [float(tok) for tok in fields]
        except ValueError:
            if lineno == 1 and not times:
                continue  # optional header
            raise ValueError(f"{path}:{lineno}: non-numeric data {text!r}") from None
        if len(numbers) != 2:
            raise ValueError(
                f"{path}:{lineno}: expected two columns, got {len(numbers)}"
            )
        times.append(numbers[0])
        values.append(numbers[1])
    if len(times) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    return TabulatedFault(
        times=np.asarray(times), values=np.asarray(values), source=str(path)
    )


def generate_fault(spec, t):
    """Evaluate a fault spec at time(s) t; scalar in, scalar out."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("fault evaluation time must be nonnegative")
    out = spec._value(arr)
    if arr.ndim == 0:
        return float(out)
    return out
