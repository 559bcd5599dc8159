"""Declarative JSON scenario configuration, presets, and run manifests.

A configuration is a JSON object whose keys mirror the scenario dataclasses
(unknown keys are rejected with their dotted path, so typos fail loudly).
A ``preset`` key merges the named built-in first; explicit keys win.  Every
run emits a manifest whose ``config`` block is the fully resolved
configuration — feeding a manifest back in reproduces the run, and the
parser accepts either a bare config or a whole manifest document.

Unit conversion shorthands: ``control.bounds.freq_bound_hz`` expresses the
frequency-deviation box in Hz (converted to the normalized state), and
step/ramp faults accept ``magnitude_mw`` against ``system_base_mw``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .conventional import ConventionalParams, default_params
from .faults import (
    AsymmetricChirp,
    CompositeFault,
    RampFault,
    StepFault,
    TabulatedFault,
    load_fault_file,
)
from .models import (
    AreaParams,
    BatteryParams,
    TieLineParams,
    build_one_area,
    build_two_area_coupled,
    discretize,
)
from .mpc import MpcBounds, MpcWeights, clf_terminal_cost
from .simulation import (
    ControlConfig,
    ControlKind,
    Scenario,
    Topology,
)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "parse_config",
    "parse_config_file",
    "scenario_to_config",
    "build_manifest",
    "SCENARIO_PRESETS",
    "FAULT_PRESETS",
    "preset_names",
]

DEFAULT_SYSTEM_BASE_MW = 185000.0


class ConfigError(ValueError):
    """Configuration rejected; the message starts with the offending path."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed configuration: the scenario plus its resolved echo."""

    scenario: Scenario
    resolved: dict
    reference: dict | None = None


# --- presets ----------------------------------------------------------------

_PRESET_AREA = {
    "f0_hz": 50.0,
    "inertia_s": 6.0,
    "base_power_pu": 1.0,
    "load_damping": 66.67,
}
_PRESET_BATTERY = {
    "capacity_pu_s": 50.0,
    "self_discharge_pu": 0.0,
    "power_min_pu": -0.15,
    "power_max_pu": 0.15,
    "soc_min": -0.75,
    "soc_max": 0.75,
    "ramp_per_step_pu": 1.0,
}
_LOCAL_WEIGHTS = {
    "q": [[10.0, 0.0], [0.0, 0.001]],
    "r": [[1.0]],
    "q_term": None,
    "slack_weight": 1e6,
}
_JOINT_WEIGHTS = {
    "q": [
        [10.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.001, 0.0, 0.0, 0.0],
        [0.0, 0.0, 10.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.001, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.1],
    ],
    "r": [[1.0, 0.0], [0.0, 1.0]],
    "q_term": None,
    "slack_weight": 1e6,
}
# reference terminal-weight values for side-by-side comparison with the
# computed terminal costs; inert data echoed into manifests, never used
# by the controller
_REFERENCE_TERMINAL = {
    "terminal_weight_scalar": 40005.0,
    "terminal_weight_matrix": [[22137.0, 17868.0], [17868.0, 22137.0]],
}

FAULT_PRESETS = {
    "paper-fig2": {
        "kind": "asymmetric-chirp",
        "amplitude": 0.3,
        "f_start_hz": 0.05,
        "f_end_hz": 0.5,
        "t_on": 0.0,
        "t_off": 60.0,
        "duty_asymmetry": 0.4,
        "dc_drift": -0.001,
    },
}

SCENARIO_PRESETS = {
    "paper-onearea": {
        "topology": "one-area",
        "duration": 100.0,
        "ts": 0.1,
        "dt": 0.01,
        "seed": 0,
        "areas": [dict(_PRESET_AREA)],
        "batteries": [dict(_PRESET_BATTERY)],
        "tie": None,
        "control": {
            "kind": "mpc-standard",
            "coordinated": False,
            "horizon": 3,
            "slack_weight": 1e6,
            "fallback_gain": 1.0,
            "weights": dict(_LOCAL_WEIGHTS),
            "bounds": {"freq_bound_hz": 1.5},
        },
        "faults": ["paper-fig2"],
        "reference": dict(_REFERENCE_TERMINAL),
    },
    "paper-twoarea-uncoordinated": {
        "topology": "two-area",
        "duration": 100.0,
        "ts": 0.1,
        "dt": 0.01,
        "seed": 0,
        "areas": [dict(_PRESET_AREA), dict(_PRESET_AREA)],
        "batteries": [dict(_PRESET_BATTERY), dict(_PRESET_BATTERY)],
        "tie": {"max_transfer_pu": 0.2},
        "control": {
            "kind": "mpc-standard",
            "coordinated": False,
            "horizon": 3,
            "slack_weight": 1e6,
            "fallback_gain": 1.0,
            "weights": dict(_LOCAL_WEIGHTS),
            "bounds": {"freq_bound_hz": 1.5},
        },
        "faults": ["paper-fig2", None],
        "reference": dict(_REFERENCE_TERMINAL),
    },
    "paper-twoarea-coordinated": {
        "topology": "two-area",
        "duration": 100.0,
        "ts": 0.1,
        "dt": 0.01,
        "seed": 0,
        "areas": [dict(_PRESET_AREA), dict(_PRESET_AREA)],
        "batteries": [dict(_PRESET_BATTERY), dict(_PRESET_BATTERY)],
        "tie": {"max_transfer_pu": 0.2},
        "control": {
            "kind": "mpc-clf",
            "coordinated": True,
            "horizon": 3,
            "slack_weight": 1e6,
            "fallback_gain": 1.0,
            "weights": _JOINT_WEIGHTS,
            "bounds": {"freq_bound_hz": 1.5},
        },
        "faults": ["paper-fig2", None],
        "reference": dict(_REFERENCE_TERMINAL),
    },
}

_PRESET_SUMMARIES = {
    "paper-onearea": "single area, battery MPC (N=3), swept asymmetric fault",
    "paper-twoarea-uncoordinated": "two tied areas, one local MPC per area",
    "paper-twoarea-coordinated": "two tied areas, one joint MPC with terminal cost",
}


def preset_names() -> list:
    return sorted(SCENARIO_PRESETS)


def preset_summary(name: str) -> str:
    return _PRESET_SUMMARIES.get(name, "")


# --- schema helpers ---------------------------------------------------------

_MISSING = object()


def _check_keys(mapping, allowed, path):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected an object, got {type(mapping).__name__}")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(
                f"{path}.{key}: unknown key (allowed: {', '.join(sorted(allowed))})"
            )


def _get_number(mapping, key, path, default=_MISSING):
    if key not in mapping or mapping[key] is None:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    return float(value)


def _get_int(mapping, key, path, default=_MISSING):
    if key not in mapping or mapping[key] is None:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    return value


def _get_bool(mapping, key, path, default):
    value = mapping.get(key, default)
    if value is None:
        return default
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected true/false, got {value!r}")
    return value


def _get_str(mapping, key, path, default=_MISSING):
    if key not in mapping or mapping[key] is None:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required")
        return default
    value = mapping[key]
    if not isinstance(value, str):
        raise ConfigError(f"{path}.{key}: expected a string, got {value!r}")
    return value


def _matrix(value, path):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a numeric matrix") from None
    if arr.ndim != 2:
        raise ConfigError(f"{path}: expected a 2-D matrix, got shape {arr.shape}")
    return arr


def _vector(value, path):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a numeric list") from None
    if arr.ndim != 1:
        raise ConfigError(f"{path}: expected a flat list, got shape {arr.shape}")
    return arr


def _build(factory, path, /, **kwargs):
    # funnel dataclass invariant violations into located config errors
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# --- section parsers --------------------------------------------------------

_AREA_KEYS = {"f0_hz", "inertia_s", "base_power_pu", "load_damping"}
_BATTERY_KEYS = {
    "capacity_pu_s", "self_discharge_pu", "power_min_pu", "power_max_pu",
    "soc_min", "soc_max", "ramp_per_step_pu",
}
_TIE_KEYS = {"max_transfer_pu"}
_CONTROL_KEYS = {
    "kind", "coordinated", "horizon", "slack_weight", "fallback_gain",
    "weights", "bounds", "conventional",
}
_WEIGHT_KEYS = {"q", "r", "q_term", "slack_weight"}
_BOUND_KEYS = {"x_min", "x_max", "u_min", "u_max", "du_min", "du_max",
               "freq_bound_hz"}
_CONVENTIONAL_KEYS = {
    "droop_hz_per_pu", "t_n_s", "c_p", "bias_pu_per_hz", "sec_limit_pu",
}
_TOP_KEYS = {
    "preset", "topology", "duration", "ts", "dt", "seed", "system_base_mw",
    "areas", "batteries", "tie", "control", "faults", "initial_state",
    "reference",
}
_FAULT_KEYS_BY_KIND = {
    "asymmetric-chirp": {"kind", "amplitude", "f_start_hz", "f_end_hz",
                         "t_on", "t_off", "duty_asymmetry", "dc_drift"},
    "step": {"kind", "magnitude", "magnitude_mw", "t_on", "t_off"},
    "ramp": {"kind", "magnitude", "magnitude_mw", "t_on", "t_off"},
    "composite": {"kind", "parts"},
    "from-file": {"kind", "path", "times", "values"},
}


def _parse_area(data, path) -> AreaParams:
    _check_keys(data, _AREA_KEYS, path)
    defaults = AreaParams()
    return _build(
        AreaParams, path,
        f0_hz=_get_number(data, "f0_hz", path, defaults.f0_hz),
        inertia_s=_get_number(data, "inertia_s", path, defaults.inertia_s),
        base_power_pu=_get_number(data, "base_power_pu", path, defaults.base_power_pu),
        load_damping=_get_number(data, "load_damping", path, defaults.load_damping),
    )


def _parse_battery(data, path) -> BatteryParams:
    _check_keys(data, _BATTERY_KEYS, path)
    d = BatteryParams()
    return _build(
        BatteryParams, path,
        capacity_pu_s=_get_number(data, "capacity_pu_s", path, d.capacity_pu_s),
        self_discharge_pu=_get_number(
            data, "self_discharge_pu", path, d.self_discharge_pu),
        power_min_pu=_get_number(data, "power_min_pu", path, d.power_min_pu),
        power_max_pu=_get_number(data, "power_max_pu", path, d.power_max_pu),
        soc_min=_get_number(data, "soc_min", path, d.soc_min),
        soc_max=_get_number(data, "soc_max", path, d.soc_max),
        ramp_per_step_pu=_get_number(
            data, "ramp_per_step_pu", path, d.ramp_per_step_pu),
    )


def _parse_fault(entry, path, base_dir, base_mw):
    if entry is None:
        return None
    if isinstance(entry, str):
        if entry not in FAULT_PRESETS:
            raise ConfigError(
                f"{path}: unknown fault preset {entry!r} "
                f"(available: {', '.join(sorted(FAULT_PRESETS))})"
            )
        entry = FAULT_PRESETS[entry]
    if not isinstance(entry, dict):
        raise ConfigError(f"{path}: expected a fault object, preset name, or null")
    kind = _get_str(entry, "kind", path)
    if kind not in _FAULT_KEYS_BY_KIND:
        raise ConfigError(
            f"{path}.kind: unknown fault kind {kind!r} "
            f"(allowed: {', '.join(sorted(_FAULT_KEYS_BY_KIND))})"
        )
    _check_keys(entry, _FAULT_KEYS_BY_KIND[kind], path)
    if kind == "asymmetric-chirp":
        return _build(
            AsymmetricChirp, path,
            amplitude=_get_number(entry, "amplitude", path),
            f_start_hz=_get_number(entry, "f_start_hz", path),
            f_end_hz=_get_number(entry, "f_end_hz", path),
            t_on=_get_number(entry, "t_on", path, 0.0),
            t_off=_get_number(entry, "t_off", path),
            duty_asymmetry=_get_number(entry, "duty_asymmetry", path, 0.5),
            dc_drift=_get_number(entry, "dc_drift", path, 0.0),
        )
    if kind in ("step", "ramp"):
        if "magnitude" in entry and "magnitude_mw" in entry:
            raise ConfigError(
                f"{path}: give magnitude or magnitude_mw, not both"
            )
        if "magnitude_mw" in entry:
            magnitude = _get_number(entry, "magnitude_mw", path) / base_mw
        else:
            magnitude = _get_number(entry, "magnitude", path)
        if kind == "step":
            return _build(
                StepFault, path,
                magnitude=magnitude,
                t_on=_get_number(entry, "t_on", path, 0.0),
                t_off=_get_number(entry, "t_off", path, math.inf),
            )
        return _build(
            RampFault, path,
            magnitude=magnitude,
            t_on=_get_number(entry, "t_on", path, 0.0),
            t_off=_get_number(entry, "t_off", path),
        )
    if kind == "composite":
        parts = entry.get("parts")
        if not isinstance(parts, list) or not parts:
            raise ConfigError(f"{path}.parts: expected a non-empty list")
        return _build(
            CompositeFault, path,
            parts=tuple(
                _parse_fault(part, f"{path}.parts[{i}]", base_dir, base_mw)
                for i, part in enumerate(parts)
            ),
        )
    # from-file: inline samples win over the path so manifests stay
    # reproducible after the original file disappears
    if "times" in entry or "values" in entry:
        times = _vector(entry.get("times"), f"{path}.times")
        values = _vector(entry.get("values"), f"{path}.values")
        source = _get_str(entry, "path", path, "<inline>")
        return _build(
            TabulatedFault, path, times=times, values=values, source=source
        )
    raw = _get_str(entry, "path", path)
    file_path = Path(raw)
    if not file_path.is_absolute() and base_dir is not None:
        file_path = Path(base_dir) / file_path
    try:
        return load_fault_file(file_path)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_weights(data, path) -> MpcWeights:
    _check_keys(data, _WEIGHT_KEYS, path)
    if "q" not in data or "r" not in data:
        raise ConfigError(f"{path}: weights need both q and r")
    q_term = data.get("q_term")
    return _build(
        MpcWeights, path,
        q=_matrix(data["q"], f"{path}.q"),
        r=_matrix(data["r"], f"{path}.r"),
        q_term=None if q_term is None else _matrix(q_term, f"{path}.q_term"),
        slack_weight=_get_number(data, "slack_weight", path, 1e6),
    )


def _parse_bounds(data, path, batteries, coordinated, f0_hz) -> MpcBounds:
    _check_keys(data, _BOUND_KEYS, path)
    explicit = [k for k in data if k != "freq_bound_hz" and data[k] is not None]
    if "freq_bound_hz" in data and data["freq_bound_hz"] is not None:
        if explicit:
            raise ConfigError(
                f"{path}: freq_bound_hz replaces the explicit arrays; "
                f"give one form only"
            )
        bound = _get_number(data, "freq_bound_hz", path)
        if not bound > 0.0:
            raise ConfigError(f"{path}.freq_bound_hz: must be positive")
        if coordinated:
            used = batteries
        else:
            used = batteries[:1]
            if any(b != batteries[0] for b in batteries[1:]):
                raise ConfigError(
                    f"{path}.freq_bound_hz: shorthand needs identical "
                    f"batteries; give explicit arrays instead"
                )
        from .simulation import default_mpc_bounds

        base = default_mpc_bounds(tuple(used), coupled=coordinated)
        x_min, x_max = base.x_min.copy(), base.x_max.copy()
        for i in range(len(used)):
            x_min[2 * i] = -bound / f0_hz
            x_max[2 * i] = bound / f0_hz
        return MpcBounds(
            x_min=x_min, x_max=x_max, u_min=base.u_min, u_max=base.u_max,
            du_min=base.du_min, du_max=base.du_max,
        )
    needed = _BOUND_KEYS - {"freq_bound_hz"}
    missing = sorted(k for k in needed if data.get(k) is None)
    if missing:
        raise ConfigError(f"{path}: missing arrays {', '.join(missing)}")
    arrays = {}
    for key in sorted(needed):
        if key in ("x_min", "x_max"):
            fill = -math.inf if key == "x_min" else math.inf
            arrays[key] = _state_bound_vector(data[key], f"{path}.{key}", fill)
        else:
            arrays[key] = _vector(data[key], f"{path}.{key}")
    return _build(MpcBounds, path, **arrays)


def _state_bound_vector(values, path, fill) -> np.ndarray:
    """State-bound array where ``null`` marks an unbounded entry."""
    if not isinstance(values, (list, tuple)):
        raise ConfigError(f"{path}: must be an array")
    out = np.empty(len(values))
    for i, value in enumerate(values):
        if value is None:
            out[i] = fill
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            out[i] = float(value)
        else:
            raise ConfigError(f"{path}[{i}]: must be a number or null")
    return out


def _parse_conventional(data, path) -> ConventionalParams:
    _check_keys(data, _CONVENTIONAL_KEYS, path)
    # field defaults read without constructing (bias has no valid default)
    defaults = {f.name: f.default for f in fields(ConventionalParams)}
    return _build(
        ConventionalParams, path,
        droop_hz_per_pu=_get_number(data, "droop_hz_per_pu", path),
        t_n_s=_get_number(data, "t_n_s", path, defaults["t_n_s"]),
        c_p=_get_number(data, "c_p", path, defaults["c_p"]),
        bias_pu_per_hz=_get_number(
            data, "bias_pu_per_hz", path, defaults["bias_pu_per_hz"]),
        sec_limit_pu=_get_number(
            data, "sec_limit_pu", path, defaults["sec_limit_pu"]),
    )


def _parse_control(data, path, batteries, f0_hz) -> ControlConfig:
    _check_keys(data, _CONTROL_KEYS, path)
    kind_name = _get_str(data, "kind", path, "none")
    try:
        kind = ControlKind(kind_name)
    except ValueError:
        raise ConfigError(
            f"{path}.kind: unknown control kind {kind_name!r} "
            f"(allowed: {', '.join(k.value for k in ControlKind)})"
        ) from None
    coordinated = _get_bool(data, "coordinated", path, False)
    weights = None
    if data.get("weights") is not None:
        weights = _parse_weights(data["weights"], f"{path}.weights")
    bounds = None
    if data.get("bounds") is not None:
        bounds = _parse_bounds(
            data["bounds"], f"{path}.bounds", batteries, coordinated, f0_hz
        )
    conventional = None
    if data.get("conventional") is not None:
        conventional = _parse_conventional(
            data["conventional"], f"{path}.conventional"
        )
    return _build(
        ControlConfig, path,
        kind=kind,
        coordinated=coordinated,
        horizon=_get_int(data, "horizon", path, 3),
        slack_weight=_get_number(data, "slack_weight", path, 1e6),
        fallback_gain=_get_number(data, "fallback_gain", path, 1.0),
        weights=weights,
        bounds=bounds,
        conventional=conventional,
    )


def _merge(base, override):
    # dicts merge recursively, everything else (lists included) replaces
    if isinstance(base, dict) and isinstance(override, dict):
        merged = dict(base)
        for key, value in override.items():
            if key in merged:
                merged[key] = _merge(merged[key], value)
            else:
                merged[key] = value
        return merged
    return override


def parse_config(text: str, *, base_dir=None) -> ScenarioConfig:
    """Parse a JSON config (or a whole manifest) into a scenario."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected a JSON object")
    if "config" in doc and ("version" in doc or "derived" in doc):
        doc = doc["config"]  # manifest re-fed as config
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")

    preset_name = doc.get("preset")
    if preset_name is not None:
        if preset_name not in SCENARIO_PRESETS:
            raise ConfigError(
                f"preset: unknown preset {preset_name!r} "
                f"(available: {', '.join(preset_names())})"
            )
        merged = _merge(SCENARIO_PRESETS[preset_name], doc)
        merged.pop("preset")
        doc = merged
    _check_keys(doc, _TOP_KEYS - {"preset"}, "top level")

    topology_name = _get_str(doc, "topology", "top level")
    try:
        topology = Topology(topology_name)
    except ValueError:
        raise ConfigError(
            f"topology: unknown topology {topology_name!r} "
            f"(allowed: {', '.join(t.value for t in Topology)})"
        ) from None
    base_mw = _get_number(doc, "system_base_mw", "top level",
                          DEFAULT_SYSTEM_BASE_MW)

    areas_data = doc.get("areas")
    if not isinstance(areas_data, list) or not areas_data:
        raise ConfigError("areas: expected a non-empty list of area objects")
    areas = tuple(
        _parse_area(entry, f"areas[{i}]") for i, entry in enumerate(areas_data)
    )
    batteries_data = doc.get("batteries")
    if not isinstance(batteries_data, list) or not batteries_data:
        raise ConfigError("batteries: expected a non-empty list")
    batteries = tuple(
        _parse_battery(entry, f"batteries[{i}]")
        for i, entry in enumerate(batteries_data)
    )

    tie = None
    if doc.get("tie") is not None:
        _check_keys(doc["tie"], _TIE_KEYS, "tie")
        tie = _build(
            TieLineParams, "tie",
            max_transfer_pu=_get_number(doc["tie"], "max_transfer_pu", "tie"),
        )

    control = ControlConfig()
    if doc.get("control") is not None:
        control = _parse_control(
            doc["control"], "control", batteries, areas[0].f0_hz
        )

    faults_data = doc.get("faults", [])
    if faults_data is None:
        faults_data = []
    if not isinstance(faults_data, list):
        raise ConfigError("faults: expected a list (one slot per area)")
    faults = tuple(
        _parse_fault(entry, f"faults[{i}]", base_dir, base_mw)
        for i, entry in enumerate(faults_data)
    )

    initial_state = doc.get("initial_state")
    if initial_state is not None:
        initial_state = tuple(
            _vector(initial_state, "initial_state").tolist()
        )

    scenario = _build(
        Scenario, "scenario",
        topology=topology,
        areas=areas,
        batteries=batteries,
        tie=tie,
        control=control,
        faults=faults if faults else (),
        duration=_get_number(doc, "duration", "top level", 100.0),
        ts=_get_number(doc, "ts", "top level", 0.1),
        dt=_get_number(doc, "dt", "top level", 0.01),
        seed=_get_int(doc, "seed", "top level", 0),
        initial_state=initial_state,
    )

    reference = doc.get("reference")
    if reference is not None and not isinstance(reference, dict):
        raise ConfigError("reference: expected an object")
    resolved = scenario_to_config(scenario)
    resolved["system_base_mw"] = base_mw
    if reference is not None:
        resolved["reference"] = reference
    return ScenarioConfig(
        scenario=scenario, resolved=resolved, reference=reference
    )


def parse_config_file(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


# --- serialization back to config form --------------------------------------

def _fault_to_config(spec):
    if spec is None:
        return None
    if isinstance(spec, AsymmetricChirp):
        return {
            "kind": "asymmetric-chirp",
            "amplitude": spec.amplitude,
            "f_start_hz": spec.f_start_hz,
            "f_end_hz": spec.f_end_hz,
            "t_on": spec.t_on,
            "t_off": spec.t_off,
            "duty_asymmetry": spec.duty_asymmetry,
            "dc_drift": spec.dc_drift,
        }
    if isinstance(spec, StepFault):
        out = {"kind": "step", "magnitude": spec.magnitude, "t_on": spec.t_on}
        if math.isfinite(spec.t_off):
            out["t_off"] = spec.t_off
        return out
    if isinstance(spec, RampFault):
        return {
            "kind": "ramp", "magnitude": spec.magnitude,
            "t_on": spec.t_on, "t_off": spec.t_off,
        }
    if isinstance(spec, CompositeFault):
        return {
            "kind": "composite",
            "parts": [_fault_to_config(p) for p in spec.parts],
        }
    if isinstance(spec, TabulatedFault):
        return {
            "kind": "from-file",
            "path": spec.source,
            "times": spec.times.tolist(),
            "values": spec.values.tolist(),
        }
    raise TypeError(f"cannot serialize fault {type(spec).__name__}")


def _weights_to_config(weights: MpcWeights | None):
    if weights is None:
        return None
    return {
        "q": np.asarray(weights.q).tolist(),
        "r": np.asarray(weights.r).tolist(),
        "q_term": None if weights.q_term is None
        else np.asarray(weights.q_term).tolist(),
        "slack_weight": weights.slack_weight,
    }


def _bounds_to_config(bounds: MpcBounds | None):
    if bounds is None:
        return None
    # unbounded state entries become null so the output stays strict JSON
    def state_list(values):
        return [
            float(v) if math.isfinite(v) else None
            for v in np.asarray(values, dtype=float).ravel()
        ]

    return {
        "x_min": state_list(bounds.x_min),
        "x_max": state_list(bounds.x_max),
        "u_min": np.asarray(bounds.u_min).tolist(),
        "u_max": np.asarray(bounds.u_max).tolist(),
        "du_min": np.asarray(bounds.du_min).tolist(),
        "du_max": np.asarray(bounds.du_max).tolist(),
    }


def _conventional_to_config(params: ConventionalParams | None):
    if params is None:
        return None
    return {
        "droop_hz_per_pu": params.droop_hz_per_pu,
        "t_n_s": params.t_n_s,
        "c_p": params.c_p,
        "bias_pu_per_hz": params.bias_pu_per_hz,
        "sec_limit_pu": params.sec_limit_pu,
    }


def scenario_to_config(scenario: Scenario) -> dict:
    """Config dict that parses back into an equivalent scenario."""
    control = scenario.control
    return {
        "topology": scenario.topology.value,
        "duration": scenario.duration,
        "ts": scenario.ts,
        "dt": scenario.dt,
        "seed": scenario.seed,
        "areas": [
            {
                "f0_hz": a.f0_hz,
                "inertia_s": a.inertia_s,
                "base_power_pu": a.base_power_pu,
                "load_damping": a.load_damping,
            }
            for a in scenario.areas
        ],
        "batteries": [
            {
                "capacity_pu_s": b.capacity_pu_s,
                "self_discharge_pu": b.self_discharge_pu,
                "power_min_pu": b.power_min_pu,
                "power_max_pu": b.power_max_pu,
                "soc_min": b.soc_min,
                "soc_max": b.soc_max,
                "ramp_per_step_pu": b.ramp_per_step_pu,
            }
            for b in scenario.batteries
        ],
        "tie": None if scenario.tie is None
        else {"max_transfer_pu": scenario.tie.max_transfer_pu},
        "control": {
            "kind": control.kind.value,
            "coordinated": control.coordinated,
            "horizon": control.horizon,
            "slack_weight": control.slack_weight,
            "fallback_gain": control.fallback_gain,
            "weights": _weights_to_config(control.weights),
            "bounds": _bounds_to_config(control.bounds),
            "conventional": _conventional_to_config(control.conventional),
        },
        "faults": [_fault_to_config(f) for f in scenario.faults],
        "initial_state": None if scenario.initial_state is None
        else list(scenario.initial_state),
    }


# --- manifests --------------------------------------------------------------

def _derived_values(scenario: Scenario) -> dict:
    """Quantities computed from the config that shape the run."""
    derived: dict = {}
    ts = scenario.ts
    one_area = scenario.topology is Topology.ONE_AREA
    local = discretize(
        build_one_area(scenario.areas[0], scenario.batteries[0]), ts
    )
    derived["local_model"] = {
        "a_d": local.a_d.tolist(),
        "b_d": local.b_d.tolist(),
    }
    if not one_area:
        coupled = discretize(
            build_two_area_coupled(
                scenario.areas, scenario.batteries, scenario.tie
            ),
            ts,
        )
        derived["coupled_model"] = {
            "a_d": coupled.a_d.tolist(),
            "b_d": coupled.b_d.tolist(),
        }
    control = scenario.control
    if control.kind is ControlKind.CONVENTIONAL:
        derived["conventional"] = [
            _conventional_to_config(
                control.conventional or default_params(area.load_damping)
            )
            for area in scenario.areas
        ]
    if control.kind is ControlKind.MPC_CLF and (
        control.weights is None or control.weights.q_term is None
    ):
        from .simulation import default_mpc_weights

        if control.coordinated:
            model, freq_idx, n = coupled, (0, 2), 5
        else:
            model, freq_idx, n = local, (0,), 2
        weights = control.weights or default_mpc_weights(n)
        derived["clf_terminal_cost"] = clf_terminal_cost(
            model, np.asarray(weights.q, dtype=float), freq_idx
        ).tolist()
    return derived


def build_manifest(config: ScenarioConfig) -> dict:
    """Self-contained record of one run; its config block is re-feedable."""
    return {
        "version": __version__,
        "config": config.resolved,
        "derived": _derived_values(config.scenario),
        "conventions": {
            "mean_abs_freq_dev": "mean of absolute frequency deviation",
            "solve_time": "optimizer call only, excludes problem construction",
        },
    }
