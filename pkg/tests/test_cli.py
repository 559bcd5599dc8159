"""Tests for the command-line interface."""

import json

import pytest

from gridmpc import cli
from gridmpc.metrics import read_metrics_csv


def _run(argv):
    return cli.main(argv)


def _write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestPresetsCommand:
    def test_lists_builtin_presets(self, capsys):
        assert _run(["presets"]) == 0
        out = capsys.readouterr().out
        for name in ("paper-onearea", "paper-twoarea-uncoordinated",
                     "paper-twoarea-coordinated"):
            assert name in out
        assert "paper-fig2" in out


class TestSimulateCommand:
    def test_preset_run_writes_artifacts(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 5.0})
        out_dir = tmp_path / "out"
        assert _run(["simulate", config, "--out", str(out_dir)]) == 0
        assert (out_dir / "trace.csv").exists()
        assert (out_dir / "metrics.csv").exists()
        assert (out_dir / "manifest.json").exists()
        assert (out_dir / "plot_timeseries.csv").exists()
        stdout = capsys.readouterr().out
        assert "max |df|" in stdout

    def test_bare_preset_name_accepted(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 2.0})
        assert _run(["simulate", config, "--out", "artifacts"]) == 0
        manifest = json.loads((tmp_path / "artifacts" / "manifest.json").read_text())
        assert manifest["config"]["duration"] == 2.0
        assert "version" in manifest

    def test_unknown_config_is_usage_error(self, tmp_path, capsys):
        code = _run(["simulate", "no-such-preset", "--out", str(tmp_path)])
        assert code == cli.USAGE_EXIT
        assert "no-such-preset" in capsys.readouterr().err

    def test_diverging_run_exits_nonzero(self, tmp_path, capsys):
        config = _write_config(tmp_path, {
            "preset": "paper-onearea",
            "control": {"kind": "none"},
            "duration": 40.0,
            "faults": [{"kind": "step", "magnitude": 1.4e6}],
        })
        code = _run(["simulate", config, "--out", str(tmp_path / "out")])
        assert code == cli.FAILURE_EXIT
        assert "diverged" in capsys.readouterr().err

    def test_manifest_refeed_reproduces_metrics(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 5.0})
        first = tmp_path / "first"
        second = tmp_path / "second"
        assert _run(["simulate", config, "--out", str(first)]) == 0
        assert _run(["simulate", str(first / "manifest.json"),
                     "--out", str(second)]) == 0
        a = read_metrics_csv(first / "metrics.csv")[0]
        b = read_metrics_csv(second / "metrics.csv")[0]
        assert a.metrics.max_abs_freq_dev_hz == b.metrics.max_abs_freq_dev_hz
        assert a.metrics.mean_abs_freq_dev_hz == b.metrics.mean_abs_freq_dev_hz


class TestSweepCommand:
    def test_small_sweep_row_count(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 5.0})
        out_dir = tmp_path / "out"
        code = _run(["sweep", config, "--n", "2..4", "--modes", "standard",
                     "--workers", "1", "--out", str(out_dir)])
        assert code == 0
        rows = read_metrics_csv(out_dir / "metrics.csv")
        assert len(rows) == 3
        assert [cell.horizon for cell in rows] == [2, 3, 4]
        assert all(not cell.failed for cell in rows)
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["sweep"]["n_values"] == [2, 3, 4]
        assert "3/3 cells succeeded" in capsys.readouterr().out

    def test_comma_list_and_plot_tables(self, tmp_path):
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 2.0})
        out_dir = tmp_path / "out"
        code = _run(["sweep", config, "--n", "2,5", "--modes", "standard,clf",
                     "--workers", "1", "--out", str(out_dir)])
        assert code == 0
        rows = read_metrics_csv(out_dir / "metrics.csv")
        assert len(rows) == 4
        assert (out_dir / "plot_max_freq_dev.csv").exists()
        assert (out_dir / "plot_solve_time.csv").exists()

    def test_bad_n_range_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            _run(["sweep", "paper-onearea", "--n", "1..3",
                  "--out", str(tmp_path)])
        assert info.value.code == cli.USAGE_EXIT

    def test_bad_mode_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            _run(["sweep", "paper-onearea", "--n", "2..3",
                  "--modes", "hybrid", "--out", str(tmp_path)])
        assert info.value.code == cli.USAGE_EXIT


class TestCompareCommand:
    def test_table_covers_all_strategies(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 5.0})
        out_dir = tmp_path / "out"
        assert _run(["compare", config, "--out", str(out_dir)]) == 0
        stdout = capsys.readouterr().out
        for mode in ("standard", "passivity", "clf", "conventional"):
            assert mode in stdout
        rows = read_metrics_csv(out_dir / "metrics.csv")
        assert len(rows) == 4

    def test_horizon_override(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, {"preset": "paper-onearea", "duration": 2.0})
        out_dir = tmp_path / "out"
        assert _run(["compare", config, "--n", "4", "--out", str(out_dir)]) == 0
        rows = read_metrics_csv(out_dir / "metrics.csv")
        assert all(cell.horizon == 4 for cell in rows)


class TestParsing:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            _run(["--version"])
        assert info.value.code == 0
        assert "gridmpc" in capsys.readouterr().out

    def test_no_command_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            _run([])
        assert info.value.code == cli.USAGE_EXIT

    def test_n_range_parser(self):
        assert cli._parse_n_range("7") == [7]
        assert cli._parse_n_range("2..5") == [2, 3, 4, 5]
        assert cli._parse_n_range("2,9,5") == [2, 5, 9]
        with pytest.raises(Exception):
            cli._parse_n_range("5..2")
