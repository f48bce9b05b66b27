# -*- coding: utf-8 -*-

import json

import core.runner as runner_module
from core import VERSION
from core.config_parser import ExperimentConfig
from core.errors import EXIT_ACCEPTANCE, EXIT_INTERRUPTED, EXIT_NUMERICAL, EXIT_OK, FitWindowError
from core.experiments import Experiment, ExperimentResult
from core.runner import DIAGNOSTICS_NAME, MANIFEST_NAME, SUMMARY_NAME, ExperimentRunner, run_experiment


def fake_experiment(monkeypatch, run):
    experiment = Experiment("fake", "测试用实验", {}, run)
    monkeypatch.setitem(runner_module.CATALOG, "fake", experiment)
    return experiment


def passing(config):
    result = ExperimentResult()
    result.add("values.csv", ("t", "value"), [(0.5, 1.0), (1.0, 2.0)])
    result.acceptance = {"ok": True}
    result.summary = {"rows": 2}
    return result


def failing(config):
    result = passing(config)
    result.acceptance = {"ok": True, "threshold": False}
    return result


def config_in(tmp_path, name="out"):
    return ExperimentConfig("fake", {}, str(tmp_path / name))


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_run_writes_manifest(monkeypatch, tmp_path):
    fake_experiment(monkeypatch, passing)
    manifest = run_experiment(config_in(tmp_path))
    assert manifest.passed
    assert manifest.version == VERSION
    assert set(manifest.outputs) == {"values.csv", SUMMARY_NAME}
    on_disk = read_json(tmp_path / "out" / MANIFEST_NAME)
    assert on_disk["outputs"] == manifest.outputs
    assert on_disk["config_hash"] == config_in(tmp_path).config_hash
    summary = read_json(tmp_path / "out" / SUMMARY_NAME)
    assert "output_dir" not in summary["config"]


def test_outputs_do_not_depend_on_location(monkeypatch, tmp_path):
    fake_experiment(monkeypatch, passing)
    first = run_experiment(config_in(tmp_path, "a"))
    second = run_experiment(config_in(tmp_path, "b"))
    assert first.outputs == second.outputs


def test_acceptance_failure_exit_code(monkeypatch, tmp_path):
    fake_experiment(monkeypatch, failing)
    assert ExperimentRunner(config_in(tmp_path)).execute() == EXIT_ACCEPTANCE
    assert (tmp_path / "out" / MANIFEST_NAME).exists()
    diagnostics = read_json(tmp_path / "out" / DIAGNOSTICS_NAME)
    assert diagnostics["diagnostics"] == {"failed": ["threshold"]}


def test_numerical_failure_writes_diagnostics(monkeypatch, tmp_path):
    def broken(config):
        raise FitWindowError("窗口内没有点", {"window": [6.0, None]})

    fake_experiment(monkeypatch, broken)
    assert ExperimentRunner(config_in(tmp_path)).execute() == EXIT_NUMERICAL
    diagnostics = read_json(tmp_path / "out" / DIAGNOSTICS_NAME)
    assert diagnostics["error_type"] == "FitWindowError"
    assert diagnostics["diagnostics"] == {"window": [6.0, None]}
    assert not (tmp_path / "out" / MANIFEST_NAME).exists()


def test_interrupt_exit_code(monkeypatch, tmp_path):
    def interrupted(config):
        raise KeyboardInterrupt

    fake_experiment(monkeypatch, interrupted)
    assert ExperimentRunner(config_in(tmp_path)).execute() == EXIT_INTERRUPTED


def test_passing_run_exit_code(monkeypatch, tmp_path):
    fake_experiment(monkeypatch, passing)
    runner = ExperimentRunner(config_in(tmp_path))
    assert runner.execute() == EXIT_OK
    assert runner.stats['outputs'] == 2
    assert runner.stats['rows'] == 2
