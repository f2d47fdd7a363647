"""Command-line runner: validation, artifacts, determinism, compare, verify."""

import json
import os
from pathlib import Path

import pytest

from photonflow import cli, io
from photonflow.config import load_config
from photonflow.core import ConfigError

HBT_CONFIG = """
[run]
experiment = hbt
n_pulses = 40000
seed = 31415
output_dir = {outdir}

[pulse_train]
rep_rate_mhz = 73.0
pulse_width_ps = 20.0

[emitter]
wavelength_nm = 945.0
lifetime_tau_ps = 271.0
p_emit = 0.4
p_multi = 0.01

[detector1]
efficiency = 0.9
irf_sigma_ps = 120.0
dead_time_ps = 25000
dark_rate_cps = 100.0

[detector2]
efficiency = 0.9
irf_sigma_ps = 120.0
dead_time_ps = 25000
dark_rate_cps = 100.0

[analysis]
bin_width_ps = 100
"""

SATURATION_CONFIG = """
[run]
experiment = saturation_scan
n_pulses = 1
seed = 7
output_dir = {outdir}

[conversion]
pump_power_mw = 327.0
eta_max = 0.417
p_sat_mw = 327.0

[saturation_scan]
n_points = 15
p_min_mw = 20.0
p_max_mw = 500.0
noise_fraction = 0.01
"""


def write_config(tmp_path, body, name="run.cfg", **fmt):
    path = tmp_path / name
    path.write_text(body.format(**fmt))
    return path


class TestConfigValidation:
    def test_unknown_key_rejected(self, tmp_path):
        bad = HBT_CONFIG + "\n[emitter]\nlifetme_tau_ps = 3\n"
        # configparser collapses duplicate sections, so append inside emitter
        bad = HBT_CONFIG.replace("p_multi = 0.01", "p_multi = 0.01\nnonsense_key = 1")
        path = write_config(tmp_path, bad, outdir=tmp_path / "out")
        with pytest.raises(ConfigError, match="nonsense_key"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path, HBT_CONFIG + "\n[mystery]\nx = 1\n", outdir=tmp_path / "out")
        with pytest.raises(ConfigError, match="mystery"):
            load_config(path)

    def test_unknown_experiment_rejected(self, tmp_path):
        path = write_config(
            tmp_path, HBT_CONFIG.replace("experiment = hbt", "experiment = banana"), outdir=tmp_path
        )
        with pytest.raises(ConfigError, match="banana"):
            load_config(path)

    def test_missing_required_section(self, tmp_path):
        body = HBT_CONFIG.split("[emitter]")[0]
        path = write_config(tmp_path, body, outdir=tmp_path / "out")
        with pytest.raises(ConfigError, match="emitter"):
            load_config(path)

    def test_bad_value_type(self, tmp_path):
        path = write_config(
            tmp_path, HBT_CONFIG.replace("p_emit = 0.4", "p_emit = often"), outdir=tmp_path
        )
        with pytest.raises(ConfigError, match="p_emit"):
            load_config(path)

    def test_cli_exit_code_on_bad_config(self, tmp_path, capsys):
        path = write_config(
            tmp_path, HBT_CONFIG.replace("p_emit = 0.4", "p_emit = 1.4"), outdir=tmp_path
        )
        assert cli.main(["run", str(path)]) == cli.EXIT_CONFIG
        assert "error" in capsys.readouterr().err

    def test_seed_and_workers_override(self, tmp_path):
        path = write_config(tmp_path, HBT_CONFIG, outdir=tmp_path / "out")
        cfg = load_config(path, seed_override=999, workers_override=4)
        assert cfg.seed.master_seed == 999
        assert cfg.workers == 4


class TestDryRun:
    def test_prints_resolved_config_without_artifacts(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        path = write_config(tmp_path, HBT_CONFIG, outdir=outdir)
        assert cli.main(["run", str(path), "--dry-run"]) == cli.EXIT_OK
        printed = capsys.readouterr().out
        assert "run.experiment = hbt" in printed
        assert "emitter.p_emit = 0.4" in printed
        assert not outdir.exists()


class TestRunArtifacts:
    def test_hbt_run_writes_everything(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        path = write_config(tmp_path, HBT_CONFIG, outdir=outdir)
        assert cli.main(["run", str(path)]) == cli.EXIT_OK
        names = {p.name for p in outdir.iterdir()}
        assert {
            "tags_ch0.pftg",
            "tags_ch1.pftg",
            "correlation.csv",
            "correlation.svg",
            "report.txt",
            "manifest.json",
        } <= names
        report = io.read_report(outdir / "report.txt")
        assert report["experiment"] == "hbt"
        assert "g2" in report and "g2_err" in report
        svg = (outdir / "correlation.svg").read_text()
        assert svg.startswith("<svg") and "<!-- data" in svg

    def test_verify_detects_tampering(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        path = write_config(tmp_path, HBT_CONFIG, outdir=outdir)
        cli.main(["run", str(path)])
        assert cli.main(["verify", str(outdir)]) == cli.EXIT_OK
        (outdir / "report.txt").write_text("experiment = hbt\n")
        assert cli.main(["verify", str(outdir)]) == cli.EXIT_RUNTIME

    def test_byte_identical_reruns(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        path = write_config(tmp_path, HBT_CONFIG, outdir=tmp_path / "unused")
        assert cli.main(["run", str(path), "--output", str(out_a)]) == cli.EXIT_OK
        assert cli.main(["run", str(path), "--output", str(out_b)]) == cli.EXIT_OK
        for name in ("tags_ch0.pftg", "tags_ch1.pftg", "correlation.csv", "report.txt"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        ma = json.loads((out_a / "manifest.json").read_text())
        mb = json.loads((out_b / "manifest.json").read_text())
        ma.pop("created_utc")
        mb.pop("created_utc")
        assert ma == mb

    def test_format_csv_skips_plots(self, tmp_path):
        outdir = tmp_path / "out"
        path = write_config(tmp_path, HBT_CONFIG, outdir=outdir)
        cli.main(["run", str(path), "--format", "csv"])
        names = {p.name for p in outdir.iterdir()}
        assert "correlation.csv" in names
        assert "correlation.svg" not in names

    def test_env_var_overrides_output(self, tmp_path, monkeypatch):
        env_out = tmp_path / "env_out"
        monkeypatch.setenv("PHOTONFLOW_OUTPUT", str(env_out))
        path = write_config(tmp_path, HBT_CONFIG, outdir=tmp_path / "cfg_out")
        assert cli.main(["run", str(path)]) == cli.EXIT_OK
        assert (env_out / "report.txt").exists()
        assert not (tmp_path / "cfg_out").exists()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PHOTONFLOW_OUTPUT", str(tmp_path / "env_out"))
        flag_out = tmp_path / "flag_out"
        path = write_config(tmp_path, HBT_CONFIG, outdir=tmp_path / "cfg_out")
        cli.main(["run", str(path), "--output", str(flag_out)])
        assert (flag_out / "report.txt").exists()
        assert not (tmp_path / "env_out").exists()

    def test_saturation_run(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        path = write_config(tmp_path, SATURATION_CONFIG, outdir=outdir)
        assert cli.main(["run", str(path)]) == cli.EXIT_OK
        assert (outdir / "saturation.csv").read_text().startswith("pump_mw,eta_measured,eta_fit")
        report = io.read_report(outdir / "report.txt")
        assert abs(report["eta_max"] - 0.417) < 0.01
        assert abs(report["p_sat_mw"] - 327.0) / 327.0 < 0.05

    def test_flagged_result_exits_3(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, HBT_CONFIG, outdir=tmp_path / "out")

        def fake_runner(cfg, art):
            return {"experiment": "hbt", "seed": 0, "n_pulses": 0}, True

        monkeypatch.setitem(cli._RUNNERS, "hbt", fake_runner)
        assert cli.main(["run", str(path)]) == cli.EXIT_FLAGGED


class TestCompare:
    def write_report_dir(self, path, items):
        path.mkdir(parents=True, exist_ok=True)
        io.write_report(path / "report.txt", items)
        return path

    def test_identical_runs_all_zero(self, tmp_path, capsys):
        items = {"experiment": "hbt", "g2": 0.02, "g2_err": 0.003}
        a = self.write_report_dir(tmp_path / "a", items)
        b = self.write_report_dir(tmp_path / "b", items)
        assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "consistent" in out

    def test_paper_style_g2_comparison(self, tmp_path, capsys):
        a = self.write_report_dir(tmp_path / "a", {"experiment": "hbt", "g2": 0.020, "g2_err": 0.003})
        b = self.write_report_dir(tmp_path / "b", {"experiment": "hbt", "g2": 0.024, "g2_err": 0.002})
        assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_OK

    def test_inconsistent_detected(self, tmp_path, capsys):
        a = self.write_report_dir(tmp_path / "a", {"experiment": "hbt", "g2": 0.020, "g2_err": 0.001})
        b = self.write_report_dir(tmp_path / "b", {"experiment": "hbt", "g2": 0.030, "g2_err": 0.001})
        assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_RUNTIME
        assert "INCONSISTENT" in capsys.readouterr().out

    def test_mismatched_experiments_error(self, tmp_path, capsys):
        a = self.write_report_dir(tmp_path / "a", {"experiment": "hbt", "g2": 0.02, "g2_err": 0.01})
        b = self.write_report_dir(tmp_path / "b", {"experiment": "lifetime", "tau_ps": 270.0, "tau_ps_err": 1.0})
        assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_CONFIG

    def test_lifetime_before_after_consistency(self, tmp_path):
        a = self.write_report_dir(
            tmp_path / "a", {"experiment": "lifetime", "tau_ps": 271.0, "tau_ps_err": 16.0}
        )
        b = self.write_report_dir(
            tmp_path / "b", {"experiment": "lifetime", "tau_ps": 269.0, "tau_ps_err": 4.0}
        )
        assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_OK


class TestProfiles:
    PROFILE_DIR = Path(__file__).resolve().parent.parent / "profiles"

    @pytest.mark.parametrize("name", [p.name for p in sorted(PROFILE_DIR.glob("*.cfg"))])
    def test_profiles_validate(self, name):
        cfg = load_config(self.PROFILE_DIR / name)
        assert cfg.experiment in (
            "lifetime",
            "hbt",
            "hom_co",
            "hom_cross",
            "hom_paired",
            "rate",
            "saturation_scan",
        )
