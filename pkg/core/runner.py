#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
runner.py

实验运行协调器，执行目录中的一个实验，写出全部产物和运行清单，
统计运行信息，并把失败映射为退出码。
"""

import time
import logging
import traceback
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Optional

from . import VERSION
from .config_parser import ExperimentConfig
from .errors import EXIT_OK, AcceptanceFailure, exit_code_for
from .experiments import CATALOG, ExperimentResult
from .writer import ResultWriter

# 配置日志
logger = logging.getLogger("runner")

MANIFEST_NAME = "manifest.json"
DIAGNOSTICS_NAME = "diagnostics.json"
SUMMARY_NAME = "summary.json"


@dataclass(frozen=True)
class RunManifest:
    """运行清单：配置哈希、版本、输出校验和与耗时"""

    config_hash: str
    version: str
    outputs: Dict[str, str]
    wall_seconds: float
    experiment: str
    acceptance: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.acceptance.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "outputs": dict(self.outputs),
            "wall_seconds": self.wall_seconds,
            "experiment": self.experiment,
            "acceptance": dict(self.acceptance),
        }


class ExperimentRunner:
    """实验运行协调器，管理单次实验的完整流程"""

    def __init__(self, config: ExperimentConfig):
        """
        初始化运行器

        参数:
            config: 校验过的实验配置
        """
        self.config = config
        self.experiment = CATALOG[config.experiment]
        self.writer = ResultWriter(config.output_dir)
        self.stats: Dict[str, Any] = {
            'outputs': 0,
            'rows': 0,
            'passed': 0,
            'failed': 0,
            'start_time': None,
            'end_time': None,
        }

    def run(self) -> RunManifest:
        """
        运行实验并写出清单；验收失败时清单照常写出

        返回:
            RunManifest
        """
        logger.info(f"开始实验 {self.experiment.id}: {self.experiment.description}")
        logger.info(f"配置哈希 {self.config.config_hash}，线程数 {self.config.jobs}")
        self.stats['start_time'] = time.time()

        result = self.experiment.run(self.config)
        self._write_outputs(result)

        self.stats['end_time'] = time.time()
        manifest = RunManifest(
            config_hash=self.config.config_hash,
            version=VERSION,
            outputs=dict(sorted(self.writer.checksums.items())),
            wall_seconds=self.stats['end_time'] - self.stats['start_time'],
            experiment=self.experiment.id,
            acceptance=dict(result.acceptance),
        )
        self.writer.write_json(MANIFEST_NAME, manifest.to_dict(), register=False)
        self._log_summary(result)
        return manifest

    def _write_outputs(self, result: ExperimentResult) -> None:
        """写出所有表格与摘要"""
        for table in result.tables:
            self.writer.write_csv(table.name, table.header, table.rows)
            self.stats['outputs'] += 1
            self.stats['rows'] += len(table.rows)
        payload = {
            "experiment": self.experiment.id,
            "config": self.config.to_dict(),
            "acceptance": result.acceptance,
            "summary": result.summary,
        }
        # output_dir/jobs/verbose 不进入摘要，保证重复运行字节一致
        for key in ("output_dir", "jobs", "verbose"):
            payload["config"].pop(key)
        self.writer.write_json(SUMMARY_NAME, payload)
        self.stats['outputs'] += 1

    def _log_summary(self, result: ExperimentResult) -> None:
        """记录运行统计和验收结果"""
        for name, ok in result.acceptance.items():
            if ok:
                self.stats['passed'] += 1
                logger.info(f"验收通过: {name}")
            else:
                self.stats['failed'] += 1
                logger.warning(f"验收未通过: {name}")

        elapsed = self.stats['end_time'] - self.stats['start_time']
        summary_info = [
            "--- 运行统计 ---",
            f"实验: {self.experiment.id}",
            f"输出文件: {self.stats['outputs']} 个，共 {self.stats['rows']} 行",
            f"验收通过: {self.stats['passed']}，未通过: {self.stats['failed']}",
            f"耗时: {elapsed:.1f} 秒",
            "----------------",
        ]
        for line in summary_info:
            logger.info(line)

    def write_diagnostics(self, exc: BaseException) -> Optional[str]:
        """
        失败时写出诊断文件

        参数:
            exc: 捕获到的异常

        返回:
            诊断文件路径，写出失败时为 None
        """
        payload = {
            "experiment": self.experiment.id,
            "config_hash": self.config.config_hash,
            "error_type": type(exc).__name__,
            "message": str(exc),
            "diagnostics": getattr(exc, "diagnostics", {}),
            "exit_code": exit_code_for(exc),
            "time": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            "traceback": traceback.format_exception(type(exc), exc, exc.__traceback__),
        }
        try:
            self.writer.write_json(DIAGNOSTICS_NAME, payload, register=False)
            return self.writer.path(DIAGNOSTICS_NAME)
        except (OSError, TypeError, ValueError) as e:
            logger.error(f"写出诊断文件失败: {e}")
            return None

    def execute(self) -> int:
        """
        运行实验并返回退出码

        返回:
            0 成功，1 中断，3 数值失败，4 验收失败
        """
        try:
            manifest = self.run()
            if not manifest.passed:
                failed = [k for k, ok in manifest.acceptance.items() if not ok]
                raise AcceptanceFailure(f"验收未通过: {', '.join(failed)}", {"failed": failed})
            return EXIT_OK
        except KeyboardInterrupt:
            logger.warning("用户中断实验 (Ctrl+C)")
            return exit_code_for(KeyboardInterrupt())
        except AcceptanceFailure as e:
            logger.error(str(e))
            self.write_diagnostics(e)
            return e.exit_code
        except Exception as e:
            logger.error(f"实验过程中发生错误: {e}", exc_info=True)
            path = self.write_diagnostics(e)
            if path:
                logger.error(f"诊断信息已写入: {path}")
            return exit_code_for(e)


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """执行一个实验并返回清单；异常原样抛出"""
    return ExperimentRunner(config).run()
