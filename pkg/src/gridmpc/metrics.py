"""Scalar performance measures, horizon sweeps, and tabular export.

Metrics reduce a trace to per-area maxima and means of absolute values
("average deviation" here always means the mean of ``|x|``; signed means
would cancel oscillations and hide exactly the behavior the measures are
meant to expose).  Sweeps run the same scenario across prediction horizons
and controller modes, optionally in parallel worker processes; cells are
independent and a failed cell is recorded, never silently dropped.

CSV schema (fixed header order): ``topology, coordination, mode, N``
followed by the metric fields in declaration order, per-area fields split
into ``_1``/``_2`` columns (area-2 columns empty for one-area rows).
Floats are written in their shortest exact decimal form, so re-importing
reproduces every value bit-for-bit (strictly more fidelity than rounding
to 12 significant digits would give).  Failed cells carry the sentinel
``FAILED`` in every metric column.  ``mean_solve_time_s`` is wall-clock
derived and therefore not byte-reproducible across runs.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .simulation import ControlKind, Scenario, SimTrace, Topology, run_closed_loop

__all__ = [
    "RunMetrics",
    "SweepCell",
    "SweepResult",
    "EmptyWindowError",
    "compute_metrics",
    "cell_scenario",
    "sweep_horizons",
    "export",
    "read_metrics_csv",
    "MODE_BY_NAME",
    "MODE_NAMES",
]

FAILED_SENTINEL = "FAILED"

MODE_BY_NAME = {
    "standard": ControlKind.MPC_STANDARD,
    "passivity": ControlKind.MPC_PASSIVITY,
    "clf": ControlKind.MPC_CLF,
}
MODE_NAMES = {kind: name for name, kind in MODE_BY_NAME.items()}


class EmptyWindowError(ValueError):
    """The requested metrics window contains no trace samples."""


@dataclass(frozen=True)
class RunMetrics:
    """Aggregate performance measures of one closed-loop run."""

    max_abs_freq_dev_hz: tuple
    mean_abs_freq_dev_hz: tuple
    max_abs_angle_diff_rad: float
    mean_abs_tie_power_pu: float
    mean_abs_control_input_pu: tuple
    mean_solve_time_s: float
    infeasible_step_count: int

    @property
    def n_areas(self) -> int:
        return len(self.max_abs_freq_dev_hz)


@dataclass(frozen=True)
class SweepCell:
    """One (topology, coordination, mode, horizon) grid point."""

    topology: str
    coordinated: bool
    mode: str
    horizon: int
    metrics: RunMetrics | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.metrics is None


@dataclass(frozen=True)
class SweepResult:
    """Complete sweep grid plus the manifest that reproduces it."""

    n_values: tuple
    cells: tuple
    manifest: dict


def compute_metrics(trace: SimTrace, window=None) -> RunMetrics:
    """Reduce a trace to its scalar measures.

    ``window`` restricts the reduction to samples with ``t0 <= t <= t1``.
    Solve times average over optimizer-bearing entries only (zero when the
    run had no optimizer, e.g. conventional control).
    """
    if trace.n_samples == 0:
        raise EmptyWindowError("trace has no samples")
    mask = np.ones(trace.n_samples, dtype=bool)
    if window is not None:
        t0, t1 = float(window[0]), float(window[1])
        mask = (trace.time >= t0) & (trace.time <= t1)
        if not np.any(mask):
            raise EmptyWindowError(f"no samples in window [{t0}, {t1}]")

    freq = np.abs(trace.freq_hz[mask])
    u = np.abs(trace.u_applied[mask])
    status = trace.status[mask]
    solver_entries = status != 0
    if np.any(solver_entries):
        mean_solve = float(np.mean(trace.solve_time[mask][solver_entries]))
    else:
        mean_solve = 0.0
    return RunMetrics(
        max_abs_freq_dev_hz=tuple(np.max(freq, axis=0)),
        mean_abs_freq_dev_hz=tuple(np.mean(freq, axis=0)),
        max_abs_angle_diff_rad=float(np.max(np.abs(trace.angle_diff[mask]))),
        mean_abs_tie_power_pu=float(np.mean(np.abs(trace.tie_power[mask]))),
        mean_abs_control_input_pu=tuple(np.mean(u, axis=0)),
        mean_solve_time_s=mean_solve,
        infeasible_step_count=int(np.sum(status == 2)),
    )


def _as_mode(mode) -> ControlKind:
    if isinstance(mode, ControlKind):
        kind = mode
    else:
        try:
            kind = MODE_BY_NAME[str(mode)]
        except KeyError:
            raise ValueError(
                f"unknown mode {mode!r}; choose from {sorted(MODE_BY_NAME)}"
            ) from None
    if kind not in MODE_NAMES:
        raise ValueError(f"sweeps cover predictive modes only, not {kind}")
    return kind


def cell_scenario(
    template: Scenario, mode, coordinated: bool, horizon: int
) -> Scenario:
    """Template with the controller swapped for one sweep cell.

    Explicit weight/bound overrides are dimensioned for the template's own
    coordination setting; cells with the other coordination fall back to
    the built-in defaults.
    """
    control = template.control
    weights, bounds = control.weights, control.bounds
    if coordinated != control.coordinated:
        weights, bounds = None, None
    control = replace(
        control,
        kind=_as_mode(mode),
        coordinated=coordinated,
        horizon=horizon,
        weights=weights,
        bounds=bounds,
    )
    return replace(template, control=control)


def _run_cell(scenario: Scenario) -> RunMetrics:
    return compute_metrics(run_closed_loop(scenario))


def sweep_horizons(
    template: Scenario, modes, n_range, *, workers: int | None = None
) -> SweepResult:
    """Run every (coordination, mode, N) cell of the grid.

    Two-area templates expand to both the uncoordinated and coordinated
    configuration.  Cells execute in up to ``workers`` processes (default
    ``min(4, cpu_count)``); output order is canonical regardless of
    completion order.  A cell that raises is recorded with its error
    message and the sweep continues.
    """
    mode_kinds = [_as_mode(m) for m in modes]
    if not mode_kinds:
        raise ValueError("at least one mode required")
    n_values = sorted({int(n) for n in n_range})
    if not n_values:
        raise ValueError("at least one horizon required")
    if n_values[0] < 2:
        raise ValueError("horizons must be at least 2")

    if template.topology is Topology.TWO_AREA:
        coordinations = (False, True)
    else:
        coordinations = (False,)
    grid = [
        (coordinated, kind, n)
        for coordinated in coordinations
        for kind in mode_kinds
        for n in n_values
    ]
    scenarios = [
        cell_scenario(template, kind, coordinated, n)
        for coordinated, kind, n in grid
    ]

    outcomes: dict[int, tuple] = {}
    if workers is None:
        workers = min(4, os.cpu_count() or 1)
    if workers <= 1 or len(grid) == 1:
        for idx, scenario in enumerate(scenarios):
            outcomes[idx] = _attempt(scenario)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_cell, scenario): idx
                for idx, scenario in enumerate(scenarios)
            }
            for future in as_completed(futures):
                idx = futures[future]
                try:
                    outcomes[idx] = (future.result(), None)
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    outcomes[idx] = (None, f"{type(exc).__name__}: {exc}")

    cells = []
    for idx, (coordinated, kind, n) in enumerate(grid):
        metrics, error = outcomes[idx]
        cells.append(
            SweepCell(
                topology=template.topology.value,
                coordinated=coordinated,
                mode=MODE_NAMES[kind],
                horizon=n,
                metrics=metrics,
                error=error,
            )
        )
    manifest = {
        "sweep": {
            "modes": [MODE_NAMES[k] for k in mode_kinds],
            "n_values": n_values,
            "coordinations": list(coordinations),
        },
        "conventions": {
            "mean_abs_freq_dev": "mean of absolute frequency deviation",
            "solve_time": "optimizer call only, excludes problem construction",
        },
        "template": _template_manifest(template),
    }
    return SweepResult(
        n_values=tuple(n_values), cells=tuple(cells), manifest=manifest
    )


def _attempt(scenario: Scenario) -> tuple:
    try:
        return _run_cell(scenario), None
    except Exception as exc:  # noqa: BLE001 - cell isolation
        return None, f"{type(exc).__name__}: {exc}"


def _template_manifest(template: Scenario) -> dict:
    # full resolved-parameter dump lives with the config layer; imported
    # lazily so the metrics module stays independent of it
    from .config import scenario_to_config

    return scenario_to_config(template)


# --- tabular export ---------------------------------------------------------

_METRIC_COLUMNS = (
    "max_abs_freq_dev_hz_1",
    "max_abs_freq_dev_hz_2",
    "mean_abs_freq_dev_hz_1",
    "mean_abs_freq_dev_hz_2",
    "max_abs_angle_diff_rad",
    "mean_abs_tie_power_pu",
    "mean_abs_control_input_pu_1",
    "mean_abs_control_input_pu_2",
    "mean_solve_time_s",
    "infeasible_step_count",
)
METRICS_HEADER = ("topology", "coordination", "mode", "N") + _METRIC_COLUMNS

# one table per aggregate measure; (file stem, per-area?, metric attribute)
_PLOT_TABLES = (
    ("plot_max_freq_dev", True, "max_abs_freq_dev_hz"),
    ("plot_mean_freq_dev", True, "mean_abs_freq_dev_hz"),
    ("plot_max_angle_diff", False, "max_abs_angle_diff_rad"),
    ("plot_mean_tie_power", False, "mean_abs_tie_power_pu"),
    ("plot_mean_control_input", True, "mean_abs_control_input_pu"),
    ("plot_solve_time", False, "mean_solve_time_s"),
)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)) or isinstance(value, (int, np.integer)):
        return str(int(value))
    # shortest decimal that parses back to the identical float
    return repr(float(value))


def _pair(values: tuple) -> tuple:
    # expand a per-area tuple into fixed _1/_2 columns
    first = _fmt(values[0])
    second = _fmt(values[1]) if len(values) > 1 else ""
    return first, second


def _metric_row(cell: SweepCell) -> list:
    prefix = [
        cell.topology,
        "coordinated" if cell.coordinated else "uncoordinated",
        cell.mode,
        str(cell.horizon),
    ]
    if cell.metrics is None:
        return prefix + [FAILED_SENTINEL] * len(_METRIC_COLUMNS)
    m = cell.metrics
    row = prefix
    row += list(_pair(m.max_abs_freq_dev_hz))
    row += list(_pair(m.mean_abs_freq_dev_hz))
    row += [_fmt(m.max_abs_angle_diff_rad), _fmt(m.mean_abs_tie_power_pu)]
    row += list(_pair(m.mean_abs_control_input_pu))
    row += [_fmt(m.mean_solve_time_s), _fmt(m.infeasible_step_count)]
    return row


def _write_csv(path: Path, header, rows) -> None:
    try:
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _export_sweep_csv(result: SweepResult, dest: Path) -> list:
    path = dest / "metrics.csv"
    _write_csv(path, METRICS_HEADER, [_metric_row(c) for c in result.cells])
    return [path]


def _export_sweep_plot_data(result: SweepResult, dest: Path) -> list:
    paths = []
    for stem, per_area, attr in _PLOT_TABLES:
        path = dest / f"{stem}.csv"
        rows = []
        for cell in result.cells:
            prefix = [
                cell.topology,
                "coordinated" if cell.coordinated else "uncoordinated",
                cell.mode,
                str(cell.horizon),
            ]
            if per_area:
                if cell.metrics is None:
                    areas = [FAILED_SENTINEL, FAILED_SENTINEL][: _cell_areas(cell)]
                else:
                    areas = [_fmt(v) for v in getattr(cell.metrics, attr)]
                for area, value in enumerate(areas, start=1):
                    rows.append(prefix + [str(area), value])
            else:
                value = (
                    FAILED_SENTINEL
                    if cell.metrics is None
                    else _fmt(getattr(cell.metrics, attr))
                )
                rows.append(prefix + ["", value])
        _write_csv(
            path,
            ("topology", "coordination", "mode", "N", "area", "value"),
            rows,
        )
        paths.append(path)
    return paths


def _cell_areas(cell: SweepCell) -> int:
    return 1 if cell.topology == Topology.ONE_AREA.value else 2


def _export_trace_csv(trace: SimTrace, dest: Path) -> list:
    n = trace.n_areas
    header = ["time_s"]
    columns = [trace.time]

    def add(name, series):
        for i in range(n):
            header.append(f"{name}_{i + 1}")
            columns.append(series[:, i])

    add("freq_hz", trace.freq_hz)
    add("soc", trace.soc)
    add("u_applied_pu", trace.u_applied)
    add("u_secondary_pu", trace.u_secondary)
    add("fault_pu", trace.fault)
    header += ["angle_diff_rad", "tie_power_pu"]
    columns += [trace.angle_diff, trace.tie_power]
    add("status", trace.status)
    add("objective", trace.objective)
    add("solve_time_s", trace.solve_time)
    add("fallback", trace.fallback)

    rows = []
    for k in range(trace.n_samples):
        rows.append([_fmt(col[k]) for col in columns])
    path = dest / "trace.csv"
    _write_csv(path, header, rows)
    return [path]


def _export_trace_plot_data(trace: SimTrace, dest: Path) -> list:
    # long format: one row per (time, series, area)
    rows = []
    per_area = (
        ("freq_hz", trace.freq_hz),
        ("soc", trace.soc),
        ("u_applied_pu", trace.u_applied),
        ("fault_pu", trace.fault),
    )
    scalar = (
        ("angle_diff_rad", trace.angle_diff),
        ("tie_power_pu", trace.tie_power),
    )
    for k in range(trace.n_samples):
        t = _fmt(trace.time[k])
        for name, series in per_area:
            for i in range(trace.n_areas):
                rows.append([t, name, str(i + 1), _fmt(series[k, i])])
        for name, series in scalar:
            rows.append([t, name, "", _fmt(series[k])])
    path = dest / "plot_timeseries.csv"
    _write_csv(path, ("time_s", "series", "area", "value"), rows)
    return [path]


def export(result, format: str, dest) -> list:
    """Write CSV or plot-ready tables for a sweep result or a trace.

    Returns the written paths.  ``dest`` is created if missing.
    """
    dest = Path(dest)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {dest}: {exc}") from exc
    if format not in ("csv", "plot-data"):
        raise ValueError(f"unknown export format {format!r}")
    if isinstance(result, SweepResult):
        if format == "csv":
            return _export_sweep_csv(result, dest)
        return _export_sweep_plot_data(result, dest)
    if isinstance(result, SimTrace):
        if format == "csv":
            return _export_trace_csv(result, dest)
        return _export_trace_plot_data(result, dest)
    raise TypeError(f"cannot export {type(result).__name__}")


def read_metrics_csv(path) -> list:
    """Load an exported metrics table back into SweepCell records."""
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            reader = csv.reader(handle)
            header = tuple(next(reader, ()))
            rows = list(reader)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if header != METRICS_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    cells = []
    for row in rows:
        record = dict(zip(header, row))
        if record["max_abs_freq_dev_hz_1"] == FAILED_SENTINEL:
            metrics = None
            error = "failed (see sweep log)"
        else:
            def per_area(stem):
                values = [float(record[f"{stem}_1"])]
                if record[f"{stem}_2"] != "":
                    values.append(float(record[f"{stem}_2"]))
                return tuple(values)

            metrics = RunMetrics(
                max_abs_freq_dev_hz=per_area("max_abs_freq_dev_hz"),
                mean_abs_freq_dev_hz=per_area("mean_abs_freq_dev_hz"),
                max_abs_angle_diff_rad=float(record["max_abs_angle_diff_rad"]),
                mean_abs_tie_power_pu=float(record["mean_abs_tie_power_pu"]),
                mean_abs_control_input_pu=per_area("mean_abs_control_input_pu"),
                mean_solve_time_s=float(record["mean_solve_time_s"]),
                infeasible_step_count=int(record["infeasible_step_count"]),
            )
            error = None
        cells.append(
            SweepCell(
                topology=record["topology"],
                coordinated=record["coordination"] == "coordinated",
                mode=record["mode"],
                horizon=int(record["N"]),
                metrics=metrics,
                error=error,
            )
        )
    return cells
