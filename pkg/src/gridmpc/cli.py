"""Command-line front end: single runs, horizon sweeps, mode comparisons.

Every run writes a ``manifest.json`` whose ``config`` block is the fully
resolved configuration; re-feeding that manifest reproduces the run.
Exit codes: 0 success, 1 run failure (diverged simulation, I/O), 2 usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    FAULT_PRESETS,
    SCENARIO_PRESETS,
    ScenarioConfig,
    build_manifest,
    parse_config,
    parse_config_file,
    preset_names,
    preset_summary,
)
from .metrics import (
    MODE_BY_NAME,
    MODE_NAMES,
    SweepCell,
    SweepResult,
    cell_scenario,
    compute_metrics,
    export,
    sweep_horizons,
)
from .simulation import (
    ControlKind,
    NonFiniteStateError,
    run_closed_loop,
)

USAGE_EXIT = 2
FAILURE_EXIT = 1


def _parse_n_range(text: str):
    """Horizon set: ``7``, ``2..10`` (inclusive), or ``2,5,9``."""
    values = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if ".." in chunk:
            lo_text, hi_text = chunk.split("..", 1)
            try:
                lo, hi = int(lo_text), int(hi_text)
            except ValueError:
                raise argparse.ArgumentTypeError(
                    f"bad horizon range {chunk!r}"
                ) from None
            if hi < lo:
                raise argparse.ArgumentTypeError(
                    f"empty horizon range {chunk!r}"
                )
            values.extend(range(lo, hi + 1))
        else:
            try:
                values.append(int(chunk))
            except ValueError:
                raise argparse.ArgumentTypeError(
                    f"bad horizon value {chunk!r}"
                ) from None
    if not values or min(values) < 2:
        raise argparse.ArgumentTypeError(
            f"horizons must be integers >= 2, got {text!r}"
        )
    return sorted(set(values))


def _parse_modes(text: str):
    modes = [m.strip() for m in text.split(",") if m.strip()]
    for mode in modes:
        if mode not in MODE_BY_NAME:
            raise argparse.ArgumentTypeError(
                f"unknown mode {mode!r} (choose from "
                f"{', '.join(sorted(MODE_BY_NAME))})"
            )
    if not modes:
        raise argparse.ArgumentTypeError("at least one mode required")
    return modes


def _load_config(spec: str) -> ScenarioConfig:
    """Accept a preset name or a path to a JSON config/manifest file."""
    if spec in SCENARIO_PRESETS:
        return parse_config(json.dumps({"preset": spec}))
    path = Path(spec)
    if not path.exists():
        raise ConfigError(
            f"{spec!r} is neither a preset ({', '.join(preset_names())}) "
            f"nor an existing config file"
        )
    return parse_config_file(path)


def _write_manifest(config: ScenarioConfig, out_dir: Path, extra=None) -> Path:
    manifest = build_manifest(config)
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _mode_label(kind: ControlKind) -> str:
    return MODE_NAMES.get(kind, kind.value)


def _single_cell_result(config: ScenarioConfig, metrics) -> SweepResult:
    control = config.scenario.control
    cell = SweepCell(
        topology=config.scenario.topology.value,
        coordinated=control.coordinated,
        mode=_mode_label(control.kind),
        horizon=control.horizon,
        metrics=metrics,
    )
    return SweepResult(
        n_values=(control.horizon,), cells=(cell,), manifest={}
    )


def _cmd_presets(_args) -> int:
    for name in preset_names():
        print(f"{name}: {preset_summary(name)}")
    for name in sorted(FAULT_PRESETS):
        print(f"{name} (fault): asymmetric swept fault waveform")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = run_closed_loop(config.scenario)
    metrics = compute_metrics(trace)
    written = []
    written += export(trace, "csv", out_dir)
    written += export(trace, "plot-data", out_dir)
    written += export(_single_cell_result(config, metrics), "csv", out_dir)
    written.append(_write_manifest(config, out_dir))
    for area, (peak, mean) in enumerate(
        zip(metrics.max_abs_freq_dev_hz, metrics.mean_abs_freq_dev_hz), start=1
    ):
        print(f"area {area}: max |df| {peak:.6g} Hz, mean |df| {mean:.6g} Hz")
    if metrics.infeasible_step_count:
        print(f"infeasible optimizer steps: {metrics.infeasible_step_count}")
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = sweep_horizons(
        config.scenario, args.modes, args.n, workers=args.workers
    )
    written = export(result, "csv", out_dir)
    written += export(result, "plot-data", out_dir)
    written.append(
        _write_manifest(config, out_dir, extra={"sweep": result.manifest["sweep"]})
    )
    failed = [cell for cell in result.cells if cell.failed]
    for cell in failed:
        print(
            f"cell failed: {cell.topology} {cell.mode} "
            f"{'coordinated' if cell.coordinated else 'uncoordinated'} "
            f"N={cell.horizon}: {cell.error}",
            file=sys.stderr,
        )
    print(f"{len(result.cells) - len(failed)}/{len(result.cells)} cells succeeded")
    for path in written:
        print(f"wrote {path}")
    if failed and len(failed) == len(result.cells):
        print("error: every sweep cell failed", file=sys.stderr)
        return FAILURE_EXIT
    return 0


_COMPARE_KINDS = (
    ControlKind.MPC_STANDARD,
    ControlKind.MPC_PASSIVITY,
    ControlKind.MPC_CLF,
    ControlKind.CONVENTIONAL,
)


def _cmd_compare(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    template = config.scenario
    horizon = args.n if args.n is not None else template.control.horizon
    cells = []
    for kind in _COMPARE_KINDS:
        if kind in MODE_NAMES:
            scenario = cell_scenario(
                template, kind, template.control.coordinated, horizon
            )
        else:
            scenario = replace(
                template, control=replace(template.control, kind=kind)
            )
        try:
            metrics = compute_metrics(run_closed_loop(scenario))
            error = None
        except (NonFiniteStateError, ValueError) as exc:
            metrics, error = None, f"{type(exc).__name__}: {exc}"
        cells.append(
            SweepCell(
                topology=template.topology.value,
                coordinated=template.control.coordinated,
                mode=_mode_label(kind),
                horizon=horizon,
                metrics=metrics,
                error=error,
            )
        )

    header = (
        f"{'mode':<14} {'max|df| Hz':>12} {'mean|df| Hz':>12} "
        f"{'max|dphi|':>10} {'mean t_sol s':>12} {'infeas':>7}"
    )
    print(header)
    for cell in cells:
        if cell.metrics is None:
            print(f"{cell.mode:<14} FAILED: {cell.error}")
            continue
        m = cell.metrics
        print(
            f"{cell.mode:<14} {max(m.max_abs_freq_dev_hz):>12.6g} "
            f"{max(m.mean_abs_freq_dev_hz):>12.6g} "
            f"{m.max_abs_angle_diff_rad:>10.4g} "
            f"{m.mean_solve_time_s:>12.4g} {m.infeasible_step_count:>7d}"
        )

    result = SweepResult(n_values=(horizon,), cells=tuple(cells), manifest={})
    written = export(result, "csv", out_dir)
    written.append(_write_manifest(config, out_dir))
    for path in written:
        print(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmpc",
        description=(
            "Predictive grid-frequency control experiments: single runs, "
            "horizon sweeps, and controller comparisons."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser(
        "simulate", help="run one scenario, write trace + metrics + manifest"
    )
    p_sim.add_argument("config", help="preset name or JSON config/manifest path")
    p_sim.add_argument("--out", default="gridmpc-out", help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser(
        "sweep", help="run a horizon sweep, write metrics tables + manifest"
    )
    p_sweep.add_argument("config", help="preset name or JSON config/manifest path")
    p_sweep.add_argument(
        "--n", required=True, type=_parse_n_range,
        help="horizons, e.g. 3, 2..10, or 2,5,9",
    )
    p_sweep.add_argument(
        "--modes", default="standard,passivity,clf", type=_parse_modes,
        help="comma-separated controller modes",
    )
    p_sweep.add_argument(
        "--workers", type=int, default=None,
        help="worker processes (default: min(4, cpu count))",
    )
    p_sweep.add_argument("--out", default="gridmpc-out", help="output directory")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser(
        "compare",
        help="run all predictive modes plus the conventional baseline",
    )
    p_cmp.add_argument("config", help="preset name or JSON config/manifest path")
    p_cmp.add_argument(
        "--n", type=int, default=None,
        help="prediction horizon (default: from config)",
    )
    p_cmp.add_argument("--out", default="gridmpc-out", help="output directory")
    p_cmp.set_defaults(func=_cmd_compare)

    p_presets = sub.add_parser("presets", help="list built-in presets")
    p_presets.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except NonFiniteStateError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return FAILURE_EXIT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
