#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
config_parser.py

配置文件解析模块，负责读取 TOML 运行配置、应用 --set 覆盖和
BFLAB_OUT 环境变量，并按实验的参数表校验参数，得到不可变的
ExperimentConfig。
"""

import os
import json
import hashlib
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Callable, Dict, Mapping, Optional, Sequence

from .errors import ConfigError

# 默认配置
DEFAULT_CONFIG = {
    "experiment": "kernel-mass",
    "output_dir": "results",
    "seed": 0,
    "jobs": 1,
    "verbose": False,
    "parameters": {},
}

# 覆盖输出目录的环境变量
OUTPUT_ENV = "BFLAB_OUT"


@dataclass(frozen=True)
class Parameter:
    """实验参数表中的一项：类型、默认值和取值条件"""

    kind: type
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    requirement: str = ""
    description: str = ""

    def coerce(self, value: Any, path: str) -> Any:
        """
        按类型转换并检查取值

        参数:
            value: 原始值
            path: 字段路径，用于错误信息

        返回:
            转换后的值
        """
        if self.kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path} 必须是数值，收到 {value!r}", path)
            value = float(value)
        elif self.kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path} 必须是整数，收到 {value!r}", path)
        elif self.kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{path} 必须是 true 或 false，收到 {value!r}", path)
        elif self.kind is str:
            if not isinstance(value, str):
                raise ConfigError(f"{path} 必须是字符串，收到 {value!r}", path)
        elif self.kind is list:
            if not isinstance(value, list) or any(
                    isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                raise ConfigError(f"{path} 必须是数值列表，收到 {value!r}", path)
            value = [float(v) for v in value]

        if self.check is not None and not self.check(value):
            raise ConfigError(f"{path} 的取值 {value!r} 不满足条件: {self.requirement}", path)
        return value


def _canonical(value: Any) -> Any:
    """浮点数统一成 17 位有效数字，保证哈希稳定"""
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, Mapping):
        return {k: _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """校验过的单次实验配置，发布后不可修改"""

    experiment: str
    parameters: Mapping[str, Any]
    output_dir: str = DEFAULT_CONFIG["output_dir"]
    seed: int = 0
    jobs: int = 1
    verbose: bool = False

    def __post_init__(self):
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))

    def __getitem__(self, name: str) -> Any:
        return self.parameters[name]

    @property
    def config_hash(self) -> str:
        payload = {"experiment": self.experiment, "parameters": dict(self.parameters), "seed": self.seed}
        text = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "parameters": dict(self.parameters),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "jobs": self.jobs,
            "verbose": self.verbose,
        }


def parse_override(item: str) -> tuple:
    """
    解析一条 key=value 覆盖，值按 TOML 标量解析，失败时按字符串处理

    参数:
        item: 形如 parameters.delta=0.2 的字符串

    返回:
        (键, 值)
    """
    if "=" not in item:
        raise ConfigError(f"覆盖项必须形如 key=value，收到 '{item}'", item)
    key, text = [part.strip() for part in item.split("=", 1)]
    if not key:
        raise ConfigError(f"覆盖项缺少键名: '{item}'", item)
    try:
        value = tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        value = text
    return key, value


class ConfigParser:
    """配置解析器类，处理配置文件的读取、覆盖和验证"""

    def __init__(self, config_path: str = "config.toml", overrides: Sequence[str] = (),
                 environ: Optional[Mapping[str, str]] = None):
        """
        初始化配置解析器

        参数:
            config_path: 配置文件路径
            overrides: 命令行 --set 覆盖项
            environ: 环境变量表，默认 os.environ
        """
        self.config_path = config_path
        self.overrides = list(overrides)
        self.environ = os.environ if environ is None else environ
        self.logger = logging.getLogger("config")
        self.config: Dict[str, Any] = {**DEFAULT_CONFIG, "parameters": {}}

    def parse_config(self) -> Dict[str, Any]:
        """
        读取配置文件并应用覆盖，不做实验参数校验

        返回:
            原始配置字典
        """
        if not os.path.exists(self.config_path):
            self.logger.warning(f"配置文件 {self.config_path} 不存在，将创建默认配置")
            self._create_default_config()
        else:
            self.logger.info(f"正在读取配置文件: {self.config_path}")
            try:
                with open(self.config_path, "rb") as f:
                    data = tomllib.load(f)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"配置文件 {self.config_path} 不是合法的 TOML: {e}", self.config_path)
            for key, value in data.items():
                self._process_config_item(key, value)

        for item in self.overrides:
            key, value = parse_override(item)
            self.logger.debug(f"应用覆盖: {key} = {value!r}")
            self._process_config_item(key, value)

        if self.environ.get(OUTPUT_ENV):
            self.config["output_dir"] = self.environ[OUTPUT_ENV]
            self.logger.info(f"输出目录由环境变量 {OUTPUT_ENV} 指定: {self.config['output_dir']}")
        return self.config

    def _process_config_item(self, key: str, value: Any) -> None:
        """
        处理单个配置项

        参数:
            key: 配置键，可带 parameters. 前缀
            value: 配置值
        """
        if key == "parameters":
            if not isinstance(value, dict):
                raise ConfigError("parameters 必须是表", "parameters")
            self.config["parameters"].update(value)
        elif key.startswith("parameters."):
            self.config["parameters"][key[len("parameters."):]] = value
        elif key in DEFAULT_CONFIG:
            self.config[key] = value
        else:
            # 裸键视为实验参数
            self.config["parameters"][key] = value

    def load(self, catalog: Mapping[str, Any]) -> ExperimentConfig:
        """
        解析配置并按目录中的参数表校验

        参数:
            catalog: 实验 id 到实验描述的映射，描述需带 schema 属性

        返回:
            校验过的实验配置
        """
        raw = self.parse_config()
        return self._validate_config(raw, catalog)

    def _validate_config(self, raw: Dict[str, Any], catalog: Mapping[str, Any]) -> ExperimentConfig:
        """验证顶层键和实验参数，出错时给出字段路径"""
        experiment = raw["experiment"]
        if not isinstance(experiment, str) or experiment not in catalog:
            known = ", ".join(sorted(catalog))
            raise ConfigError(f"未知的实验 '{experiment}'，可选: {known}", "experiment")

        output_dir = raw["output_dir"]
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigError("output_dir 必须是非空字符串", "output_dir")
        seed = Parameter(int, 0, lambda v: v >= 0, ">= 0").coerce(raw["seed"], "seed")
        jobs = Parameter(int, 1, lambda v: v >= 1, ">= 1").coerce(raw["jobs"], "jobs")
        verbose = Parameter(bool, False).coerce(raw["verbose"], "verbose")

        schema: Mapping[str, Parameter] = catalog[experiment].schema
        supplied = raw["parameters"]
        unknown = sorted(set(supplied) - set(schema))
        if unknown:
            raise ConfigError(f"实验 {experiment} 不接受参数: {', '.join(unknown)}", f"parameters.{unknown[0]}")

        parameters = {}
        for name, spec in schema.items():
            value = supplied.get(name, spec.default)
            parameters[name] = spec.coerce(value, f"parameters.{name}")

        config = ExperimentConfig(experiment, parameters, output_dir, seed, jobs, verbose)
        self.logger.info(f"配置校验通过: 实验={experiment}, 哈希={config.config_hash[:12]}")
        return config

    def _create_default_config(self) -> None:
        """创建默认配置文件"""
        try:
            with open(self.config_path, 'w', encoding='utf-8') as f:
                f.write("""# 双调和热核实验配置文件
# 修改配置后生效，不需要修改代码

# 实验 id，用 `python main.py list` 查看全部
experiment = "kernel-mass"

# 输出目录，环境变量 BFLAB_OUT 优先
output_dir = "results"

# 随机数种子与并行线程数
seed = 0
jobs = 1

# 是否输出调试日志
verbose = false

# 实验参数，未列出的取默认值
[parameters]
""")
                self.logger.info(f"已创建默认配置文件: {self.config_path}")
        except OSError as e:
            self.logger.error(f"创建默认配置文件失败: {e}")
