# -*- coding: utf-8 -*-

import pytest

from core.config_parser import ConfigParser, ExperimentConfig, Parameter, parse_override
from core.errors import ConfigError
from core.experiments import CATALOG


def write_config(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_missing_file_creates_default(tmp_path):
    path = tmp_path / "config.toml"
    config = ConfigParser(str(path), environ={}).load(CATALOG)
    assert path.exists()
    assert config.experiment == "kernel-mass"
    assert config.output_dir == "results"
    assert config["points"] == CATALOG["kernel-mass"].schema["points"].default
    # 再次读取自动生成的文件得到相同的配置
    assert ConfigParser(str(path), environ={}).load(CATALOG).config_hash == config.config_hash


def test_file_overrides_and_environment(tmp_path):
    path = write_config(tmp_path / "run.toml", """
experiment = "flow-run"
seed = 4

[parameters]
points = 64
delta = 0.2
""")
    config = ConfigParser(path, ["parameters.T=0.05", "dt=1e-4", "jobs=3"],
                          environ={"BFLAB_OUT": str(tmp_path / "out")}).load(CATALOG)
    assert config.experiment == "flow-run"
    assert config.seed == 4
    assert config.jobs == 3
    assert config["points"] == 64
    assert config["delta"] == 0.2
    assert config["T"] == 0.05
    assert config["dt"] == 1e-4
    assert config.output_dir == str(tmp_path / "out")


def test_config_is_frozen(tmp_path):
    config = ConfigParser(str(tmp_path / "c.toml"), environ={}).load(CATALOG)
    with pytest.raises(TypeError):
        config.parameters["points"] = 16
    with pytest.raises(AttributeError):
        config.seed = 2


def test_hash_ignores_output_location():
    a = ExperimentConfig("kernel-mass", {"points": 32, "T": 1.0}, "one", 0, 1)
    b = ExperimentConfig("kernel-mass", {"T": 1.0, "points": 32}, "two", 0, 8)
    c = ExperimentConfig("kernel-mass", {"points": 32, "T": 0.5}, "one", 0, 1)
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash


def test_unknown_experiment_lists_catalog(tmp_path):
    path = write_config(tmp_path / "c.toml", 'experiment = "warp-drive"\n')
    with pytest.raises(ConfigError) as info:
        ConfigParser(path, environ={}).load(CATALOG)
    assert info.value.field_path == "experiment"
    assert "kernel-mass" in str(info.value)


def test_unknown_parameter_is_rejected(tmp_path):
    with pytest.raises(ConfigError) as info:
        ConfigParser(str(tmp_path / "c.toml"), ["parameters.warp=9"], environ={}).load(CATALOG)
    assert info.value.field_path == "parameters.warp"


@pytest.mark.parametrize("override, field", [
    ("points=48", "parameters.points"),
    ("points='many'", "parameters.points"),
    ("epsilon=true", "parameters.epsilon"),
    ("epsilon=0.7", "parameters.epsilon"),
    ("seed=-1", "seed"),
    ("jobs=0", "jobs"),
])
def test_invalid_values_report_field_path(tmp_path, override, field):
    with pytest.raises(ConfigError) as info:
        ConfigParser(str(tmp_path / "c.toml"), [override], environ={}).load(CATALOG)
    assert info.value.field_path == field


def test_broken_toml(tmp_path):
    path = write_config(tmp_path / "c.toml", "experiment = \n")
    with pytest.raises(ConfigError):
        ConfigParser(path, environ={}).load(CATALOG)


def test_parse_override():
    assert parse_override("parameters.k_values=[0, 1.5]") == ("parameters.k_values", [0, 1.5])
    assert parse_override("data=sawtooth") == ("data", "sawtooth")
    assert parse_override("verbose = true") == ("verbose", True)
    with pytest.raises(ConfigError):
        parse_override("points")


def test_parameter_coercion():
    spec = Parameter(list, [1.0])
    assert spec.coerce([0, 2], "x") == [0.0, 2.0]
    assert Parameter(float, 1.0).coerce(3, "x") == 3.0
    with pytest.raises(ConfigError):
        Parameter(int, 1).coerce(2.5, "x")
