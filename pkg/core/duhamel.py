#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
duhamel.py

初值传播算子 S_g u₀、奇异体积位势 V[f](t) = ∫₀ᵗ S(t-s) f(s) ds，
以及一致 Schauder 比值实验。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, interpolate, special

from .errors import ExplicitTimesError, InvalidArgumentError, NumericalFailure
from .kernel import KernelTable, MetricSpec, ReferenceOperator
from .norms import DEFAULT_ALPHA, NormReport, x_norm, y_norm
from .spectral import Grid, SpaceTimeField, SpectralField, apply_multiplier, geometric_times

logger = logging.getLogger("duhamel")

# 每个半区间的 Gauss 节点数
DEFAULT_NODES = 24
# 体积位势的相对求积容差（n 与 n/2 节点结果之差）
QUADRATURE_TOLERANCE = 1e-6


class Propagator:
    """
    S(t) = exp(-tL) 的统一接口。

    flat: 乘子 e^{-|ξ|^4 t}，任意 t；
    eigen: 参考算子的特征分解，任意 t（1 维）；
    table: KernelTable 的行，只接受表中显式给出的时间。
    """

    def __init__(self, grid: Grid, kind: str, metric: Optional[MetricSpec] = None,
                 operator: Optional[ReferenceOperator] = None, table: Optional[KernelTable] = None):
        self.grid = grid
        self.kind = kind
        self.metric = metric if metric is not None else MetricSpec.flat(grid)
        self.operator = operator
        self.table = table

    @classmethod
    def flat(cls, grid: Grid) -> "Propagator":
        return cls(grid, "flat")

    @classmethod
    def from_metric(cls, metric: MetricSpec) -> "Propagator":
        if metric.is_flat:
            return cls.flat(metric.grid)
        return cls(metric.grid, "eigen", metric, operator=ReferenceOperator(metric))

    @classmethod
    def from_table(cls, table: KernelTable, metric: Optional[MetricSpec] = None) -> "Propagator":
        return cls(table.grid, "table", metric, table=table)

    @property
    def any_time(self) -> bool:
        return self.kind != "table"

    def apply(self, u0: SpectralField, t: float) -> SpectralField:
        if not t > 0:
            raise InvalidArgumentError(f"时间 t 必须为正，收到 {t}")
        if u0.grid != self.grid:
            raise InvalidArgumentError("初值与传播算子的网格不一致")
        if self.kind == "flat":
            return apply_multiplier(u0, np.exp(-self.grid.k_squared() ** 2 * t))
        if self.kind == "eigen":
            return SpectralField(self.grid, self.operator.apply(u0.samples, t).reshape(self.grid.shape))
        j = self.table.time_index(t)
        return SpectralField(self.grid, self.table.apply(j, u0.samples).reshape(self.grid.shape))

    def generator(self, u: SpectralField) -> SpectralField:
        """L u = Δ_g² u"""
        return self.metric.bilaplacian(u)

    def volume_density(self) -> np.ndarray:
        return self.metric.volume_density()

    def describe(self) -> dict:
        return {"kind": self.kind, "metric": self.metric.describe()}


class Source:
    """
    体积位势的源项 f(s)，可在任意 s ∈ (0, T] 求值。

    由 SpaceTimeField 构造时对 t^{p}·f 在 log t 上做三次样条插值，
    p 为源项的奇性指数（Y_T 中为 1/2）；早于第一个切片的时间保持加权值不变。
    """

    def __init__(self, grid: Grid, func: Callable[[float], SpectralField], description: str = "function"):
        self.grid = grid
        self._func = func
        self.description = description

    def __call__(self, s: float) -> SpectralField:
        return self._func(float(s))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "Source":
        """func(t, *mesh) 给出 t 时刻的采样值"""
        mesh = grid.mesh()
        return cls(grid, lambda s: SpectralField(grid, np.broadcast_to(func(s, *mesh), grid.shape)))

    @classmethod
    def from_field(cls, f: SpaceTimeField, singularity: float = 0.5) -> "Source":
        grid = f.grid
        times = f.times
        weighted = f.samples() * (times ** singularity).reshape((-1,) + (1,) * grid.dim)
        if len(f) == 1:
            return cls(grid, lambda s: SpectralField(grid, weighted[0] * s ** -singularity), "field")
        spline = interpolate.CubicSpline(np.log(times), weighted, axis=0, bc_type="natural")
        lo, hi = float(np.log(times[0])), float(np.log(times[-1]))

        def evaluate(s: float) -> SpectralField:
            x = min(max(np.log(s), lo), hi)
            return SpectralField(grid, spline(x) * s ** -singularity)

        return cls(grid, evaluate, "field")

    def sample(self, times: Sequence[float]) -> SpaceTimeField:
        times = np.asarray(times, dtype=float)
        return SpaceTimeField(times, tuple(self(t) for t in times))


@lru_cache(maxsize=16)
def _gauss(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def duhamel_nodes(t: float, n: int = DEFAULT_NODES) -> Tuple[np.ndarray, np.ndarray]:
    """
    ∫₀ᵗ ds 的端点分级求积节点

    在 t/2 处分成两段，靠近 0 的一段用 s = (t/2)σ⁴，靠近 t 的一段用
    s = t - (t/2)σ⁴，每段 n 个 Gauss 节点。

    返回:
        (节点 s, 权重)
    """
    sigma, w = _gauss(n)
    half = 0.5 * t
    jac = half * 4.0 * sigma ** 3 * w
    s_left = half * sigma ** 4
    s_right = t - half * sigma ** 4
    return np.concatenate([s_left, s_right]), np.concatenate([jac, jac])


def _potential_at(source: Source, propagator: Propagator, t: float, n: int) -> np.ndarray:
    nodes, weights = duhamel_nodes(t, n)
    total = np.zeros(propagator.grid.shape)
    for s, w in zip(nodes, weights):
        if t - s <= 0.0:
            continue
        total += w * propagator.apply(source(s), t - s).samples
    return total


def volume_potential(f: Union[Source, SpaceTimeField], propagator: Propagator, T: Optional[float] = None,
                     times: Optional[Sequence[float]] = None, nodes: int = DEFAULT_NODES,
                     tolerance: Optional[float] = QUADRATURE_TOLERANCE, jobs: int = 1) -> SpaceTimeField:
    """
    体积位势 V[f](t) = ∫₀ᵗ S(t-s) f(s) ds

    参数:
        f: 源项（Source 或时空场）
        propagator: 可在任意时间求值的传播算子
        T: 时间上界
        times: 输出时间，默认取 f 的时间网格
        nodes: 每段 Gauss 节点数
        tolerance: 与半数节点结果的相对差上限，None 表示不检查
        jobs: 线程数

    返回:
        时空场 V[f]
    """
    if not propagator.any_time:
        raise ExplicitTimesError("体积位势需要在任意时间求值的传播算子，核表只提供显式时间")
    if isinstance(f, SpaceTimeField):
        if times is None:
            times = f.times
        f = Source.from_field(f)
    if times is None:
        raise InvalidArgumentError("源项为函数时必须给出输出时间")
    times = np.asarray(times, dtype=float)
    if T is not None and times[-1] > T * (1 + 1e-12):
        raise InvalidArgumentError(f"输出时间超出 (0, T={T}]")

    def evaluate(t: float) -> np.ndarray:
        value = _potential_at(f, propagator, float(t), nodes)
        if tolerance is not None:
            coarse = _potential_at(f, propagator, float(t), max(nodes // 2, 2))
            scale = max(float(np.max(np.abs(value))), 1e-300)
            gap = float(np.max(np.abs(value - coarse))) / scale
            if gap > tolerance and np.max(np.abs(value)) > 1e-14:
                raise NumericalFailure(
                    f"体积位势求积在 t={t:.3e} 未达到容差 ({gap:.2e} > {tolerance:.1e})，请增加 nodes",
                    {"t": float(t), "relative_gap": gap, "nodes": nodes, "hint": "increase nodes"})
        return value

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        slices = list(pool.map(evaluate, times))
    logger.debug(f"体积位势: {times.size} 个时间, 每段 {nodes} 个节点, 传播算子 {propagator.kind}")
    return SpaceTimeField.from_samples(propagator.grid, times, np.stack(slices))


def propagate_initial(u0: SpectralField, times: Sequence[float],
                      propagator: Optional[Propagator] = None, jobs: int = 1) -> SpaceTimeField:
    """
    S_g u₀ 在给定时间上的轨迹

    参数:
        u0: 初值
        times: 正的递增时间
        propagator: 传播算子，默认平坦乘子
        jobs: 线程数

    返回:
        时空场
    """
    propagator = propagator or Propagator.flat(u0.grid)
    times = np.asarray(times, dtype=float)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        slices = list(pool.map(lambda t: propagator.apply(u0, float(t)), times))
    return SpaceTimeField(times, tuple(slices))


def separable_response(lam: float, t: float, power: float) -> float:
    """
    ∫₀ᵗ e^{-λ(t-s)} s^{power} ds

    power = 0 用指数闭式，power = -1/2 用 Dawson 函数，其余用带代数权的自适应求积。
    """
    if not t > 0 or power <= -1.0 or lam < 0:
        raise InvalidArgumentError(f"非法参数 lam={lam}, t={t}, power={power}")
    if power == 0.0:
        return t if lam == 0.0 else float(-np.expm1(-lam * t) / lam)
    if power == -0.5:
        if lam == 0.0:
            return 2.0 * np.sqrt(t)
        return float(2.0 * special.dawsn(np.sqrt(lam * t)) / np.sqrt(lam))
    value, _ = integrate.quad(lambda s: np.exp(-lam * (t - s)), 0.0, t, weight="alg", wvar=(power, 0.0),
                              epsabs=1e-15, epsrel=1e-13, limit=200)
    return float(value)


def duhamel_residual(source: Source, propagator: Propagator, t: float, rel_step: float = 1e-3,
                     nodes: int = DEFAULT_NODES) -> float:
    """相对残差 ‖∂_t V + L V - f‖ / ‖f‖，时间导数用中心差分"""
    d = rel_step * t
    v_minus = _potential_at(source, propagator, t - d, nodes)
    v_plus = _potential_at(source, propagator, t + d, nodes)
    v = SpectralField(propagator.grid, _potential_at(source, propagator, t, nodes))
    f = source(t)
    residual = (v_plus - v_minus) / (2 * d) + propagator.generator(v).samples - f.samples
    return float(np.max(np.abs(residual)) / max(f.sup_norm(), 1e-300))


@dataclass(frozen=True)
class SchauderRatioRecord:
    epsilon: float
    T: float
    alpha: float
    x_norm: float
    y_norm: float
    ratio: float
    x_report: NormReport
    y_report: NormReport

    def csv_row(self) -> Tuple[float, float, float, float, float, float]:
        return self.epsilon, self.T, self.alpha, self.x_norm, self.y_norm, self.ratio


def schauder_ratio(metric: MetricSpec, f: Source, T: float, alpha: float = DEFAULT_ALPHA,
                   count: int = 16, propagator: Optional[Propagator] = None,
                   nodes: int = DEFAULT_NODES, jobs: int = 1) -> SchauderRatioRecord:
    """
    ‖V[f]‖_{X_T} / ‖f‖_{Y_T}

    参数:
        metric: 度量
        f: 源项
        T: 时间上界
        alpha: Hölder 指数
        count: 几何时间网格的切片数
        propagator: 传播算子，默认由度量构造
        nodes: 每段 Gauss 节点数
        jobs: 线程数

    返回:
        SchauderRatioRecord
    """
    propagator = propagator or Propagator.from_metric(metric)
    times = geometric_times(T, count)
    f_field = f.sample(times)
    y_report = y_norm(f_field, alpha, T, jobs=jobs)
    if y_report.total <= 0.0:
        raise InvalidArgumentError("源项的 Y_T 范数为零，比值无定义")
    v = volume_potential(f, propagator, T, times=times, nodes=nodes, jobs=jobs)
    x_report = x_norm(v, alpha, T, metric=metric, jobs=jobs)
    ratio = x_report.total / y_report.total
    logger.info(f"Schauder 比值 ε={metric.amplitude}, T={T}: {x_report.total:.6e} / {y_report.total:.6e} = {ratio:.6f}")
    return SchauderRatioRecord(metric.amplitude, float(T), alpha, x_report.total, y_report.total,
                               ratio, x_report, y_report)
