# -*- coding: utf-8 -*-

import json

import pytest

from core.cli import main, parse_arguments
from core.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE

CHEAP_KERNEL_MASS = """
experiment = "kernel-mass"
output_dir = "{output}"

[parameters]
points = 32
count = 4
"""


def write_config(path, output):
    path.write_text(CHEAP_KERNEL_MASS.format(output=output), encoding="utf-8")
    return str(path)


def test_list_prints_catalog(workdir, capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "kernel-mass" in out
    assert "solver-agreement" in out


def test_version_flag():
    with pytest.raises(SystemExit) as info:
        parse_arguments(["--version"])
    assert info.value.code == 0


def test_bad_arguments_exit_with_usage_code():
    with pytest.raises(SystemExit) as info:
        parse_arguments(["run", "--jobs", "many"])
    assert info.value.code == EXIT_USAGE


def test_unknown_experiment(workdir):
    assert main(["run", "--set", "experiment='warp-drive'"]) == EXIT_USAGE


def test_invalid_parameter_value(workdir):
    assert main(["run", "--set", "points=48"]) == EXIT_USAGE


def test_delta_band_violation_is_numerical_failure(workdir):
    code = main(["run", "--set", "experiment='flow-run'", "--set", "points=32",
                 "--set", "amplitude=0.5", "--set", "output_dir='band'"])
    assert code == EXIT_NUMERICAL
    diagnostics = json.loads((workdir / "band" / "diagnostics.json").read_text(encoding="utf-8"))
    assert diagnostics["error_type"] == "DeltaBandViolation"
    assert (workdir / "band" / "log.txt").exists()


def test_run_writes_outputs(workdir):
    config = write_config(workdir / "run.toml", "first")
    assert main(["run", "--config", config, "--jobs", "2"]) == EXIT_OK
    manifest = json.loads((workdir / "first" / "manifest.json").read_text(encoding="utf-8"))
    assert set(manifest["outputs"]) == {"mass.csv", "kernel_table.csv", "summary.json"}
    assert all(manifest["acceptance"].values())


def test_identical_runs_are_byte_identical(workdir, monkeypatch):
    config = write_config(workdir / "run.toml", "unused")
    monkeypatch.setenv("BFLAB_OUT", str(workdir / "one"))
    assert main(["run", "--config", config]) == EXIT_OK
    monkeypatch.setenv("BFLAB_OUT", str(workdir / "two"))
    assert main(["run", "--config", config, "--jobs", "4"]) == EXIT_OK
    first = json.loads((workdir / "one" / "manifest.json").read_text(encoding="utf-8"))
    second = json.loads((workdir / "two" / "manifest.json").read_text(encoding="utf-8"))
    assert first["outputs"] == second["outputs"]
    assert first["config_hash"] == second["config_hash"]
    for name in first["outputs"]:
        assert (workdir / "one" / name).read_bytes() == (workdir / "two" / name).read_bytes()
