#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
errors.py

异常类型定义。库函数只负责抛出异常，由 runner/cli 在边界处统一捕获、
记录日志并映射为进程退出码。
"""

from typing import Any, Dict, Optional

# 退出码
EXIT_OK = 0
EXIT_INTERRUPTED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


class LabError(Exception):
    """所有实验室异常的基类"""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})


class InvalidArgumentError(LabError, ValueError):
    """参数不合法（负阶导数、t <= 0、网格不匹配等）"""

    exit_code = EXIT_USAGE


class ConfigError(LabError):
    """配置文件或命令行覆盖项不符合实验的参数模式"""

    exit_code = EXIT_USAGE

    def __init__(self, message: str, field_path: str = ""):
        super().__init__(f"{field_path}: {message}" if field_path else message,
                         {"field_path": field_path})
        self.field_path = field_path


class NumericalFailure(LabError):
    """数值计算失败，diagnostics 中携带诊断信息"""


class QuadratureError(NumericalFailure):
    """求积未达到容差"""


class ResolutionError(NumericalFailure):
    """网格分辨率不足以表示请求的时间"""

    def __init__(self, message: str, required_points: int):
        super().__init__(message, {"required_points": required_points})
        self.required_points = required_points


class FitWindowError(NumericalFailure):
    """拟合窗口内没有可用数据"""


class DivergenceError(NumericalFailure):
    """Neumann 级数不收敛"""


class NoContractionError(NumericalFailure):
    """不动点迭代没有压缩"""


class InsufficientDataError(LabError):
    """时间切片数量不足"""


class ExplicitTimesError(LabError):
    """核表中没有请求的时间，不做插值"""


class ConstructionError(LabError):
    """构造失败（例如单位分解不成立）"""


class KahlerViolation(LabError):
    """度量密度 h = 1 + ΔΦ 在某处不为正"""


class StepRejected(KahlerViolation):
    """时间步在允许的减半次数内仍被拒绝"""


class DeltaBandViolation(LabError):
    """初值不满足 δ 带条件 (1-δ) < h < (1+δ)"""


class InternalError(LabError):
    """内部不变量被破坏（例如共轭对称漂移）"""


class AcceptanceFailure(LabError):
    """实验结果未达到验收阈值"""

    exit_code = EXIT_ACCEPTANCE


def exit_code_for(exc: BaseException) -> int:
    """
    把异常映射为退出码

    参数:
        exc: 捕获到的异常

    返回:
        进程退出码
    """
    if isinstance(exc, KeyboardInterrupt):
        return EXIT_INTERRUPTED
    if isinstance(exc, LabError):
        return exc.exit_code
    return EXIT_NUMERICAL
