#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
writer.py

结果文件写出模块，负责把实验结果写成 CSV 或 JSON 文件，
并记录每个输出的 sha256 校验和，供运行清单使用。
"""

import os
import csv
import json
import hashlib
import logging
from typing import Any, Dict, Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError

# 配置日志
logger = logging.getLogger("writer")

# 浮点数一律输出 17 位有效数字
FLOAT_FORMAT = ".17g"


def format_value(value: Any) -> str:
    """CSV 单元格格式化：浮点数 17 位有效数字，其余按 str"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def to_jsonable(value: Any) -> Any:
    """把 numpy 标量与数组转换为 JSON 可写的值，浮点数保留 17 位有效数字"""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            return format(value, FLOAT_FORMAT)
        return float(format(value, FLOAT_FORMAT))
    return value


def file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ResultWriter:
    """结果写出器，把 CSV/JSON 写进输出目录并登记校验和"""

    def __init__(self, output_dir: str):
        """
        初始化写出器

        参数:
            output_dir: 输出目录，不存在时创建
        """
        self.output_dir = output_dir
        self.checksums: Dict[str, str] = {}
        try:
            os.makedirs(output_dir, exist_ok=True)
        except OSError as e:
            raise InvalidArgumentError(f"无法创建输出目录 {output_dir}: {e}")
        logger.info(f"初始化结果写出器，输出目录: {self.output_dir}")

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """
        写出 CSV 文件

        参数:
            name: 文件名
            header: 表头
            rows: 数据行

        返回:
            文件的 sha256
        """
        path = self.path(name)
        count = 0
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise InvalidArgumentError(f"{name} 第 {count + 1} 行有 {len(row)} 列，表头有 {len(header)} 列")
                writer.writerow([format_value(v) for v in row])
                count += 1
        logger.info(f"已写出 {name}: {count} 行")
        return self._register(name, path)

    def write_json(self, name: str, payload: Mapping[str, Any], register: bool = True) -> str:
        """
        写出 JSON 文件，键排序

        参数:
            name: 文件名
            payload: 内容
            register: 是否登记到校验和表

        返回:
            文件的 sha256
        """
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(to_jsonable(payload), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        logger.debug(f"已写出 {name}")
        if register:
            return self._register(name, path)
        return file_checksum(path)

    def _register(self, name: str, path: str) -> str:
        checksum = file_checksum(path)
        self.checksums[name] = checksum
        return checksum
