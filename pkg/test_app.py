"""
End-to-end tests of the command line entry point.
"""
import json

import pandas as pd
import pytest

from app import main
from utils.artifact_store import DIAGNOSTIC_COLUMNS, read_json, read_snapshot


def write_config(tmp_path, data):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


SMALL_EVOLVE = {
    "physics": {"dim": 1, "s": 0.7, "alpha": 2.8},
    "grid": {"n": 256, "L": 20.0},
    "time": {"dt": 1e-3, "t_end": 0.02, "sample_every": 5},
    "initial": {"type": "gaussian"},
    "monitors": {"R": [4.0], "virial": True, "q_exponent": 10.0},
}


class TestCommands:
    """Exit codes and artifacts of each command."""

    def test_invalid_config_writes_error_file(self, tmp_path, capsys):
        config = write_config(tmp_path, {"time": {"dt": 0.0}})
        out = tmp_path / "out"
        assert main(["evolve", "--config", config, "--output", str(out)]) == 1
        error = read_json(out / "error.json")
        assert error["success"] is False
        assert error["error"] == "ConfigValidationError"
        assert any("time.dt" in message for message in error["errors"])
        assert "❌" in capsys.readouterr().out

    def test_unreadable_config(self, tmp_path):
        out = tmp_path / "out"
        assert main(["classify", "--config", str(tmp_path / "missing.json"), "--output", str(out)]) == 1
        assert "cannot read config" in read_json(out / "error.json")["errors"][0]

    def test_bad_thread_count(self, tmp_path):
        assert main(["sweep", "--threads", "0", "--output", str(tmp_path)]) == 1

    def test_evolve(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["evolve", "--config", write_config(tmp_path, SMALL_EVOLVE), "--output", str(out)]) == 0
        df = pd.read_csv(out / "diagnostics.csv")
        assert list(df.columns) == DIAGNOSTIC_COLUMNS
        assert len(df) == 5
        assert df["M_phi"].notna().all()
        report = read_json(out / "blowup_report.json")
        assert report["blowup"]["stopping_reason"] == "t_end_reached"
        assert set(report["initial_virial_estimates"]) == {"4.0"}
        assert set(report["virial_monitor"]) == {"4.0"}
        assert report["virial_monitor"]["4.0"]["exterior_growth_constant"] >= 0
        assert (out / "fnls_lab.log").is_file()
        assert "✅" in capsys.readouterr().out

    def test_ground_state(self, tmp_path):
        config = write_config(tmp_path, {"grid": {"n": 512, "L": 40.0}})
        assert main(["ground-state", "--config", config, "--output", str(tmp_path)]) == 0
        summary = read_json(tmp_path / "thresholds.json")
        assert summary["kind"] == "Q"
        assert summary["criticality"] == "intercritical"
        assert summary["converged"]
        assert summary["thresholds"]["critical_point"] > 0
        profile, s, alpha = read_snapshot(tmp_path / "ground_state.fnls")
        assert profile.grid.points_per_dim == 512
        assert (s, alpha) == (0.6, 3.0)

    def test_classify(self, tmp_path):
        assert main(["classify", "--output", str(tmp_path)]) == 0
        verdict = read_json(tmp_path / "verdict.json")
        assert verdict["verdict"] == "criterion_met"
        assert verdict["metadata"]["delta_branch"] == "negative_energy"
        assert verdict["evidence"] == "analytic"

    def test_classify_confirmed_along_flow(self, tmp_path):
        config = write_config(tmp_path, {"monitors": {"flow_check": True}})
        assert main(["classify", "--config", config, "--output", str(tmp_path)]) == 0
        verdict = read_json(tmp_path / "verdict.json")
        assert verdict["verdict"] == "criterion_met"
        assert verdict["evidence"] == "numeric"
        assert verdict["provenance"]["sup_K_monitored"] <= -0.99 * verdict["delta"]

    def test_output_directory_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FNLS_OUTPUT_DIR", str(tmp_path / "env_out"))
        config = write_config(tmp_path, {"time": {"dt": -1.0}})
        assert main(["evolve", "--config", config]) == 1
        assert (tmp_path / "env_out" / "error.json").is_file()

    def test_sweep(self, tmp_path):
        data = {**SMALL_EVOLVE, "monitors": {"R": [4.0]},
                "sweep": {"command": "evolve", "parameters": {"initial.amplitude": [0.5, 1.0]}}}
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", write_config(tmp_path, data), "--output", str(out),
                     "--threads", "2"]) == 0
        index = read_json(out / "index.json")
        assert [run["run_id"] for run in index["runs"]] == ["run_0000", "run_0001"]
        assert (out / "run_0001" / "diagnostics.csv").is_file()

    def test_sweep_needs_section(self, tmp_path):
        assert main(["sweep", "--output", str(tmp_path)]) == 1
        assert "sweep" in read_json(tmp_path / "error.json")["errors"][0]


class TestDeterminism:
    """Same config and seed give byte-identical artifacts."""

    def test_evolve_artifacts(self, tmp_path):
        config = write_config(tmp_path, SMALL_EVOLVE)
        for name in ("first", "second"):
            assert main(["evolve", "--config", config, "--output", str(tmp_path / name)]) == 0
        for artifact in ("diagnostics.csv", "blowup_report.json"):
            assert (tmp_path / "first" / artifact).read_bytes() == (tmp_path / "second" / artifact).read_bytes()

    def test_threaded_sweep_index(self, tmp_path):
        data = {**SMALL_EVOLVE, "monitors": {"R": [4.0]},
                "sweep": {"command": "evolve", "parameters": {"initial.amplitude": [0.5, 0.75, 1.0]}}}
        config = write_config(tmp_path, data)
        for name in ("first", "second"):
            assert main(["sweep", "--config", config, "--output", str(tmp_path / name), "--threads", "3"]) == 0
        first, second = tmp_path / "first", tmp_path / "second"
        assert (first / "index.json").read_bytes() == (second / "index.json").read_bytes()
        for run_id in ("run_0000", "run_0001", "run_0002"):
            assert ((first / run_id / "diagnostics.csv").read_bytes()
                    == (second / run_id / "diagnostics.csv").read_bytes())


@pytest.mark.slow
class TestVerify:
    """Residual report of the verify command."""

    def test_verify(self, tmp_path):
        config = write_config(tmp_path, {"physics": {"dim": 1, "s": 0.7, "alpha": 2.8},
                                         "grid": {"n": 512, "L": 20.0}, "monitors": {"R": [4.0]}})
        status = main(["verify", "--config", config, "--output", str(tmp_path)])
        report = read_json(tmp_path / "verification.json")
        assert status == (0 if report["overall_passed"] else 2)
        checks = report["checks"]
        for name in ("quadrature_symbol", "auxiliary_identity", "mass_conservation",
                     "energy_conservation", "virial_identity_V", "pohozaev"):
            assert checks[name]["passed"], name
