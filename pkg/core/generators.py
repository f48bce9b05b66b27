#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
generators.py

初始数据生成器模块，按正则性类别生成周期网格上的初始势函数 u₀，
也支持执行用户自定义的生成函数文件。

所有内置类别都先构造零均值的二阶导数剖面 g，再用谱方法解 Δu₀ = g，
因此 ‖Δu₀‖∞ 可以精确标定到目标幅度。
"""

import os
import sys
import importlib.util
import logging
from typing import Callable, List, Optional, cast

import numpy as np

from .errors import InvalidArgumentError
from .spectral import Grid, SpectralField

# 配置日志
logger = logging.getLogger("generators")

# 支持的初始数据类别
DATA_CLASSES = ("smooth", "sawtooth", "weierstrass", "c11", "file")
# 用户生成函数的名字
GENERATOR_FUNCTION = "generate_initial_data"
# Weierstrass 型剖面的振幅衰减与频率倍增
WEIERSTRASS_DECAY = 0.5
WEIERSTRASS_GROWTH = 2
# c11 类别的随机台阶数
C11_STEPS = 6


class InitialDataGenerator:
    """初始数据生成器类，按类别生成标定过的初始势函数"""

    def __init__(self, grid: Grid, seed: int = 0):
        """
        初始化生成器

        参数:
            grid: 目标网格
            seed: 随机数种子，c11 与 smooth 类别使用
        """
        self.grid = grid
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.generated_count = 0

    def generate(self, kind: str, target: Optional[float] = 0.05,
                 generator_file: Optional[str] = None) -> SpectralField:
        """
        按类别生成初始势函数

        参数:
            kind: 类别名，见 DATA_CLASSES
            target: ‖Δu₀‖∞ 的目标值，None 表示不标定
            generator_file: kind 为 file 时的 Python 文件路径

        返回:
            零均值的初始势函数
        """
        if kind not in DATA_CLASSES:
            raise InvalidArgumentError(f"未知的初始数据类别 '{kind}'，可选: {', '.join(DATA_CLASSES)}")

        if kind == "file":
            if generator_file is None:
                raise InvalidArgumentError("类别 file 需要提供生成函数文件")
            field = self.from_file(generator_file)
        else:
            profile = getattr(self, f"_{kind}_profile")()
            field = self.from_second_derivative(profile)

        if target is not None:
            field = self.calibrate(field, target)

        self.generated_count += 1
        logger.debug(f"生成初始数据: 类别={kind}, ‖Δu₀‖∞={self.second_derivative_size(field):.6g}")
        return field

    def batch(self, kind: str, count: int, target: Optional[float] = 0.05) -> List[SpectralField]:
        """按同一类别连续生成 count 个样本，随机类别每次抽取新的随机数"""
        if count < 1:
            raise InvalidArgumentError(f"样本数必须为正，收到 {count}")
        return [self.generate(kind, target) for _ in range(count)]

    def from_second_derivative(self, profile: np.ndarray) -> SpectralField:
        """
        谱方法求解 Δu = g - mean(g)

        参数:
            profile: 网格上的二阶导数剖面

        返回:
            零均值解 u
        """
        profile = np.asarray(profile, dtype=float)
        if profile.shape != self.grid.shape:
            raise InvalidArgumentError(f"剖面形状 {profile.shape} 与网格 {self.grid.shape} 不符")

        coefficients = np.fft.rfftn(profile - profile.mean())
        k_squared = self.grid.k_squared()
        inverse = np.zeros_like(k_squared)
        nonzero = k_squared > 0
        inverse[nonzero] = -1.0 / k_squared[nonzero]
        return SpectralField(self.grid, np.fft.irfftn(coefficients * inverse, s=self.grid.shape))

    def calibrate(self, field: SpectralField, target: float) -> SpectralField:
        """缩放 field 使 ‖Δu₀‖∞ 等于 target"""
        if target < 0:
            raise InvalidArgumentError(f"目标幅度不能为负，收到 {target}")
        size = self.second_derivative_size(field)
        if size == 0.0:
            if target > 0:
                raise InvalidArgumentError("初始数据的二阶导数恒为零，无法标定")
            return field
        return field * (target / size)

    def second_derivative_size(self, field: SpectralField) -> float:
        coefficients = -self.grid.k_squared() * field.coefficients
        return float(np.max(np.abs(np.fft.irfftn(coefficients, s=self.grid.shape))))

    def _axis_sum(self, make_axis: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """一维剖面在二维网格上按坐标轴求和"""
        mesh = self.grid.mesh()
        if self.grid.dim == 1:
            return make_axis(mesh[0])
        return 0.5 * (make_axis(mesh[0]) + make_axis(mesh[1]))

    def _smooth_profile(self) -> np.ndarray:
        phases = self.rng.uniform(0.0, 2.0 * np.pi, size=3)
        scale = 2.0 * np.pi / self.grid.period

        def axis(x):
            return sum(np.cos((m + 1) * scale * x + phases[m]) / (m + 1) ** 2 for m in range(3))

        return self._axis_sum(axis)

    def _sawtooth_profile(self) -> np.ndarray:
        # 每个周期一次跳跃，L^∞ 但不连续
        period = self.grid.period
        return self._axis_sum(lambda x: 2.0 * np.mod(x, period) / period - 1.0)

    def _weierstrass_profile(self) -> np.ndarray:
        scale = 2.0 * np.pi / self.grid.period
        limit = self.grid.points_per_axis // 3
        frequencies = []
        frequency = 1
        while frequency <= limit:
            frequencies.append(frequency)
            frequency *= WEIERSTRASS_GROWTH

        def axis(x):
            return sum(WEIERSTRASS_DECAY ** j * np.cos(f * scale * x) for j, f in enumerate(frequencies))

        return self._axis_sum(axis)

    def _c11_profile(self) -> np.ndarray:
        period = self.grid.period
        edges = np.sort(self.rng.uniform(0.0, period, size=C11_STEPS))
        levels = self.rng.uniform(-1.0, 1.0, size=C11_STEPS)

        def axis(x):
            # 台阶在周期上循环，最后一段接回第一个台阶之前
            index = np.searchsorted(edges, np.mod(x, period), side="right") - 1
            return levels[index % C11_STEPS]

        return self._axis_sum(axis)

    def from_file(self, filepath: str) -> SpectralField:
        """
        从用户文件加载初始数据

        参数:
            filepath: 定义 generate_initial_data(*mesh) 的 Python 文件路径

        返回:
            减去均值后的初始势函数
        """
        func = self._load_generator_from_file(filepath)
        try:
            logger.info("使用自定义函数生成初始数据...")
            values = np.asarray(func(*self.grid.mesh()), dtype=float)
            values = np.broadcast_to(values, self.grid.shape)
        except Exception as e:
            logger.error(f"执行生成函数时出错: {e}", exc_info=True)
            raise InvalidArgumentError(f"生成函数执行失败: {e}")

        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("生成函数返回了非有限值")
        return SpectralField(self.grid, values - values.mean())

    def _load_generator_from_file(self, filepath: str) -> Callable[..., np.ndarray]:
        """
        从文件加载生成函数

        参数:
            filepath: Python文件路径

        返回:
            生成函数对象
        """
        if not os.path.exists(filepath):
            logger.error(f"生成器文件不存在: {filepath}")
            raise InvalidArgumentError(f"找不到生成器文件: {filepath}")

        logger.info(f"从文件加载生成函数: {filepath}")
        module_name = os.path.basename(filepath).replace('.py', '')
        try:
            spec = importlib.util.spec_from_file_location(module_name, filepath)
            if spec is None or spec.loader is None:
                raise InvalidArgumentError(f"无法加载模块: {filepath}")
            module = importlib.util.module_from_spec(spec)
            sys.modules[module_name] = module
            spec.loader.exec_module(module)
        except SyntaxError as e:
            logger.error(f"生成器文件语法错误: {e}")
            raise InvalidArgumentError(f"生成器文件 {filepath} 包含语法错误: {e}")

        func = getattr(module, GENERATOR_FUNCTION, None)
        if not callable(func):
            logger.error(f"在文件 {filepath} 中未找到可调用的 '{GENERATOR_FUNCTION}'")
            logger.info(f"生成器文件必须定义 {GENERATOR_FUNCTION}(*mesh)，返回网格上的采样值")
            raise InvalidArgumentError(f"生成器文件缺少 {GENERATOR_FUNCTION} 函数")
        return cast(Callable[..., np.ndarray], func)
