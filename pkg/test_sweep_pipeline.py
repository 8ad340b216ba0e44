"""
Tests for the sweep worker pool and its index.
"""
import threading
import time

import pytest

from models.exceptions import DomainError
from utils.artifact_store import read_json
from utils.run_config import parse_config
from utils.sweep_pipeline import ProcessingStatus, SweepPipeline


def sweep_config(values):
    return parse_config({"sweep": {"command": "classify", "parameters": {"initial.c": values}}})


class TestSweepPipeline:
    """Runs, failures and merging in run-id order."""

    def test_runs_every_point(self, tmp_path):
        pipeline = SweepPipeline()
        seen = []
        lock = threading.Lock()

        def handler(config, directory):
            # finish in reverse order so the merge has to sort
            time.sleep(0.01 * (3 - config.initial["c"]))
            with lock:
                seen.append(config.initial["c"])
            (directory / "verdict.json").write_text("{}", encoding="utf-8")
            return {"success": True}

        pipeline.register_handler("classify", handler)
        result = pipeline.run_sweep(sweep_config([1.0, 2.0, 3.0]), tmp_path, max_workers=3)
        assert result["success"]
        assert sorted(seen) == [1.0, 2.0, 3.0]
        index = read_json(tmp_path / "index.json")
        assert [run["run_id"] for run in index["runs"]] == ["run_0000", "run_0001", "run_0002"]
        assert [run["overrides"]["initial.c"] for run in index["runs"]] == [1.0, 2.0, 3.0]
        assert index["failed"] == []
        assert (tmp_path / "run_0002" / "verdict.json").is_file()

    def test_failures_are_isolated(self, tmp_path):
        pipeline = SweepPipeline()

        def handler(config, directory):
            if config.initial["c"] == 2.0:
                raise DomainError("no admissible rho")
            if config.initial["c"] == 3.0:
                return {"success": False, "error": "solver gave up"}
            return {"success": True, "overall_passed": True}

        pipeline.register_handler("classify", handler)
        result = pipeline.run_sweep(sweep_config([1.0, 2.0, 3.0]), tmp_path, max_workers=2)
        assert not result["success"]
        index = result["index"]
        assert [run["run_id"] for run in index["runs"]] == ["run_0000"]
        assert index["runs"][0]["overall_passed"]
        errors = {run["run_id"]: run["error"] for run in index["failed"]}
        assert errors == {"run_0001": "no admissible rho", "run_0002": "solver gave up"}

        status = pipeline.get_status()
        assert status["tasks"]["run_0000"] == ProcessingStatus.COMPLETED.value
        assert status["tasks"]["run_0001"] == ProcessingStatus.FAILED.value
        assert status["metrics"]["completed_tasks"] == 1
        assert status["metrics"]["failed_tasks"] == 2

    def test_unexpected_exception_is_recorded(self, tmp_path):
        pipeline = SweepPipeline()

        def handler(config, directory):
            raise RuntimeError("boom")

        pipeline.register_handler("classify", handler)
        result = pipeline.run_sweep(sweep_config([1.0]), tmp_path)
        assert result["index"]["failed"][0]["error"] == "boom"

    def test_missing_handler(self, tmp_path):
        with pytest.raises(DomainError, match="No handler registered"):
            SweepPipeline().run_sweep(sweep_config([1.0]), tmp_path)

    def test_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv("FNLS_THREADS", "4")
        assert SweepPipeline.default_workers() == 4
        monkeypatch.setenv("FNLS_THREADS", "0")
        assert SweepPipeline.default_workers() == 1
