#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
parametrix.py

1 维周期区间上变系数双调和热核的 Levi 构造：

    冻结系数核 G(x; t; ξ)，全局参数核
        Z(x, y; t) = Σ_ν ψ_ν(x) G(x - y; t; y) φ_ν(y) ρ(y)^{-1}，
    亏量 K = -(∂_t + Δ_g²) Z，时空卷积 (A∗B)，Neumann 级数 Ψ = Σ K_m，
    以及组装 b = Z + Z∗Ψ 并与矩阵指数参考核比对。

冻结核在环面上取周期化形式，即平坦环面核在时间 a(ξ)t 处的值；
所有区间共享同一个全局坐标，坐标变换只是平移。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import interpolate

from .duhamel import duhamel_nodes
from .errors import (ConstructionError, DivergenceError, InvalidArgumentError,
                     NumericalFailure)
from .kernel import (KernelTable, MetricSpec, ReferenceOperator, differentiate_columns,
                     euclidean_kernel_profile, flat_slice, resolved_window_start)
from .spectral import Grid, SpectralField

logger = logging.getLogger("parametrix")

# 单位分解支撑 r₀/2，ψ 平台 3r₀/4，ψ 支撑 7r₀/8
NESTING = (0.5, 0.75, 0.875)
# r₀ = CHART_OVERLAP · 周期 / 区间数
CHART_OVERLAP = 1.5
PARTITION_TOLERANCE = 1e-12
DEFAULT_CONV_NODES = 16
DIVERGENCE_CHECK = 12
MAX_TERMS = 24
DEFECT_GROUPS = ("frozen", "lower_order", "cutoff")


def _mollifier(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, np.exp(-1.0 / safe), 0.0)


def smooth_step(s: np.ndarray) -> np.ndarray:
    """s <= 0 时为 0，s >= 1 时为 1 的光滑过渡"""
    left = _mollifier(s)
    right = _mollifier(1.0 - np.asarray(s, dtype=float))
    return left / (left + right)


def periodic_distance(x: np.ndarray, center: float, period: float) -> np.ndarray:
    d = np.mod(np.asarray(x) - center, period)
    return np.minimum(d, period - d)


def _trig_eval(samples: np.ndarray, period: float, x: float) -> float:
    """带限周期插值在任意点的值"""
    n = samples.size
    coeffs = np.fft.rfft(samples)
    k = 2.0 * np.pi / period * np.arange(coeffs.size)
    inner = (coeffs[1:-1] * np.exp(1j * k[1:-1] * x)).real.sum()
    total = coeffs[0].real + 2.0 * inner + coeffs[-1].real * np.cos(k[-1] * x)
    return float(total / n)


@dataclass(frozen=True, eq=False)
class ChartLayout:
    """
    n_charts 段等长弧上的单位分解 {φ_ν} 与截断函数 {ψ_ν}

    φ_ν 由 exp(-1/x) 型鼓包在 r₀/2 内归一化得到，ψ_ν 在 3r₀/4 内为 1、
    在 7r₀/8 外为 0。
    """

    grid: Grid
    n_charts: int
    r0: float
    centers: Tuple[float, ...]
    phi: Tuple[SpectralField, ...]
    psi: Tuple[SpectralField, ...]

    @property
    def radii(self) -> Dict[str, float]:
        return {"phi_support": NESTING[0] * self.r0,
                "psi_plateau": NESTING[1] * self.r0,
                "psi_support": NESTING[2] * self.r0}

    @classmethod
    def build(cls, grid: Grid, n_charts: int, overlap: float = CHART_OVERLAP) -> "ChartLayout":
        if grid.dim != 1:
            raise InvalidArgumentError("参数核构造只支持 1 维")
        if n_charts < 2:
            raise InvalidArgumentError(f"区间数至少为 2，收到 {n_charts}")
        period = grid.period
        r0 = overlap * period / n_charts
        x = grid.nodes()
        centers = tuple(nu * period / n_charts for nu in range(n_charts))
        support, plateau, outer = (f * r0 for f in NESTING)
        bumps = []
        for c in centers:
            d = periodic_distance(x, c, period)
            bumps.append(_mollifier(1.0 - (d / support) ** 2))
        total = np.sum(bumps, axis=0)
        if total.min() <= 0.0:
            raise ConstructionError(f"区间没有覆盖整个周期（最小鼓包和 {total.min():.3e}）",
                                    {"n_charts": n_charts, "r0": r0})
        phi = tuple(SpectralField(grid, b / total) for b in bumps)
        drift = float(np.max(np.abs(np.sum([p.samples for p in phi], axis=0) - 1.0)))
        if drift > PARTITION_TOLERANCE:
            raise ConstructionError(f"单位分解误差 {drift:.3e} 超过容差", {"drift": drift})
        psi = tuple(SpectralField(grid, smooth_step((outer - periodic_distance(x, c, period)) / (outer - plateau)))
                    for c in centers)
        for p, q in zip(phi, psi):
            if np.any((p.samples > 0) & (np.abs(q.samples - 1.0) > 0)):
                raise ConstructionError("ψ_ν 在 φ_ν 的支撑上不恒为 1")
        return cls(grid, n_charts, r0, centers, phi, psi)

    def partition_error(self) -> float:
        return float(np.max(np.abs(np.sum([p.samples for p in self.phi], axis=0) - 1.0)))


class FrozenKernelFamily:
    """冻结系数核族，a(ξ) = g^{11}(ξ)² = ρ(ξ)^{-4}"""

    def __init__(self, metric: MetricSpec):
        if metric.dim != 1:
            raise InvalidArgumentError("冻结核族只支持 1 维")
        self.metric = metric
        self.grid = metric.grid
        self.coefficient = metric.leading_coefficient()
        self.a_min = float(self.coefficient.min())
        if not self.a_min > 0:
            raise InvalidArgumentError("冻结系数必须为正")

    def coefficient_at(self, xi: float) -> float:
        rho = _trig_eval(self.metric.conformal_factor(), self.grid.period, xi)
        return rho ** -4

    def columns(self, t: float, order: int = 0) -> np.ndarray:
        """矩阵 [∂_x^order G_per(x_i - y_l; a(y_l) t)]_{il}"""
        grid = self.grid
        k = grid.wavenumbers()[0]
        y = grid.nodes()
        coeffs = np.exp(-np.outer(k ** 4, self.coefficient) * t - 1j * np.outer(k, y))
        coeffs *= grid.points_per_axis / grid.period
        matrix = np.fft.irfft(coeffs, n=grid.points_per_axis, axis=0)
        return differentiate_columns(matrix, grid, order) if order else matrix


def frozen_kernel(family: FrozenKernelFamily, x: float, t: float, xi: float) -> float:
    """
    G(x; t; ξ) = (a(ξ)t)^{-1/4} B((a(ξ)t)^{-1/4} x)，B 为欧氏核 b_0(·; 1)

    参数:
        family: 冻结核族
        x: 位移
        t: 时间，必须为正
        xi: 冻结点

    返回:
        核值
    """
    if not t > 0:
        raise InvalidArgumentError(f"时间 t 必须为正，收到 {t}")
    scale = family.coefficient_at(xi) * t
    return float(euclidean_kernel_profile(1, 0, scale, [abs(float(x))]).values[0])


def frozen_residual(family: FrozenKernelFamily, t: float, column: int, rel_step: float = 1e-4) -> float:
    """‖(∂_t + a(ξ)∂_x⁴)G‖ / ‖∂_x⁴G‖，∂_t 用中心差分，∂_x⁴ 用谱导数"""
    d = rel_step * t
    g_plus = family.columns(t + d)[:, column]
    g_minus = family.columns(t - d)[:, column]
    d4 = family.columns(t, order=4)[:, column]
    residual = (g_plus - g_minus) / (2 * d) + family.coefficient[column] * d4
    return float(np.max(np.abs(residual)) / np.max(np.abs(d4)))


def _columns_derivative(matrix: np.ndarray, grid: Grid, times: int = 1) -> np.ndarray:
    for _ in range(times):
        matrix = differentiate_columns(matrix, grid, 1)
    return matrix


def _bilaplacian_columns(matrix: np.ndarray, metric: MetricSpec) -> np.ndarray:
    """Δ_g² 作用在每一列上（x 方向）"""
    inv = (1.0 / metric.conformal_factor())[:, None]
    grid = metric.grid

    def lap(m):
        return inv * _columns_derivative(inv * _columns_derivative(m, grid), grid)

    return lap(lap(matrix))


def _expand_flat(grid: Grid, slice_: np.ndarray) -> np.ndarray:
    n = grid.points_per_axis
    idx = np.arange(n)
    return slice_[(idx[:, None] - idx[None, :]) % n]


@dataclass(frozen=True, eq=False)
class TimeKernel:
    """
    两点核随时间的族：times × N × N 的采样。

    at(t) 在表中时间上精确返回；其间对 t·M(t) 在 log t 上做三次样条插值，
    插值对数据是线性的；早于第一个时间时取第一个切片。
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    label: str = "K"
    _spline: Optional[interpolate.CubicSpline] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if values.shape[0] != times.size:
            raise InvalidArgumentError("时间数与切片数不一致")
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.size >= 2:
            weighted = values * times[:, None, None]
            object.__setattr__(self, "_spline", interpolate.CubicSpline(np.log(times), weighted, axis=0))

    @classmethod
    def zeros(cls, grid: Grid, times: Sequence[float], weights: np.ndarray, label: str = "0") -> "TimeKernel":
        n = grid.points_per_axis
        return cls(grid, np.asarray(times, dtype=float), np.zeros((len(times), n, n)), weights, label)

    def at(self, t: float) -> np.ndarray:
        hit = np.nonzero(np.abs(self.times - t) <= 1e-12 * t)[0]
        if hit.size:
            return self.values[hit[0]]
        if t <= self.times[0] or self._spline is None:
            return self.values[0]
        x = min(np.log(t), np.log(self.times[-1]))
        return self._spline(x) / t

    def sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.values), axis=(1, 2))

    def weighted_sup(self) -> float:
        """max_j t_j · sup|M(t_j)|"""
        return float(np.max(self.times * self.sup_norms()))

    def singularity_exponent(self, t_min: Optional[float] = None) -> float:
        """log sup|M(t)| 对 log t 的斜率"""
        sups = self.sup_norms()
        keep = (sups > 1e-300) & (self.times >= (t_min or 0.0))
        if np.count_nonzero(keep) < 2:
            return float("nan")
        return float(np.polyfit(np.log(self.times[keep]), np.log(sups[keep]), 1)[0])

    def __add__(self, other: "TimeKernel") -> "TimeKernel":
        return TimeKernel(self.grid, self.times, self.values + other.values, self.weights, self.label)


class AnalyticKernel:
    """可在任意 t 求值的两点核"""

    def __init__(self, grid: Grid, func: Callable[[float], np.ndarray], weights: np.ndarray, label: str):
        self.grid = grid
        self._func = func
        self.weights = weights
        self.label = label

    def at(self, t: float) -> np.ndarray:
        return self._func(float(t))

    def sample(self, times: Sequence[float], jobs: int = 1) -> TimeKernel:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            values = list(pool.map(self.at, times))
        return TimeKernel(self.grid, np.asarray(times, dtype=float), np.stack(values), self.weights, self.label)


def _flat_source(grid: Grid) -> AnalyticKernel:
    """平坦环面核作为任意时间的两点核"""
    return AnalyticKernel(grid, lambda t: _expand_flat(grid, flat_slice(grid, t)),
                          np.full(grid.points_per_axis, grid.spacing), "flat")


@dataclass(frozen=True, eq=False)
class ParametrixTable:
    """全局参数核 Z 的采样及其任意时间求值"""

    metric: MetricSpec
    family: FrozenKernelFamily
    charts: ChartLayout
    times: np.ndarray
    values: np.ndarray
    # S_{il} = Σ_ν ψ_ν(x_i) φ_ν(y_l) / ρ(y_l)
    cutoff_weights: np.ndarray = field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.metric.grid

    @property
    def weights(self) -> np.ndarray:
        return self.metric.volume_weights()

    def at(self, t: float) -> np.ndarray:
        return self.family.columns(t) * self.cutoff_weights

    def sampled(self) -> TimeKernel:
        return TimeKernel(self.grid, self.times, self.values, self.weights, "Z")


def _cutoff_weights(metric: MetricSpec, charts: ChartLayout) -> np.ndarray:
    rho = metric.conformal_factor()
    return sum(np.outer(q.samples, p.samples / rho) for p, q in zip(charts.phi, charts.psi))


def build_parametrix(metric: MetricSpec, grid: Grid, times: Sequence[float], n_charts: int = 4,
                     jobs: int = 1) -> ParametrixTable:
    """
    组装全局参数核 Z(x, y; t)

    参数:
        metric: 1 维度量
        grid: 网格
        times: 正的时间
        n_charts: 区间数（至少 2）
        jobs: 线程数

    返回:
        ParametrixTable
    """
    if metric.grid != grid:
        raise InvalidArgumentError("度量与网格不一致")
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise InvalidArgumentError("所有时间必须为正")
    charts = ChartLayout.build(grid, n_charts)
    family = FrozenKernelFamily(metric)
    weights = _cutoff_weights(metric, charts)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        values = list(pool.map(lambda t: family.columns(float(t)) * weights, times))
    logger.info(f"参数核构建完成: ε={metric.amplitude}, {n_charts} 个区间, {times.size} 个时间")
    return ParametrixTable(metric, family, charts, times, np.stack(values), weights)


@dataclass(frozen=True, eq=False)
class DefectTable:
    """亏量 K = -(∂_t + Δ_g²) Z，按冻结差、低阶项、截断导数三组分别保存"""

    parametrix: ParametrixTable
    times: np.ndarray
    groups: Dict[str, np.ndarray]

    @property
    def grid(self) -> Grid:
        return self.parametrix.grid

    @property
    def weights(self) -> np.ndarray:
        return self.parametrix.weights

    @property
    def values(self) -> np.ndarray:
        return sum(self.groups[g] for g in DEFECT_GROUPS)

    def at(self, t: float) -> np.ndarray:
        return sum(_defect_groups(self.parametrix, t).values())

    def at_groups(self, t: float) -> Dict[str, np.ndarray]:
        return _defect_groups(self.parametrix, t)

    def sampled(self) -> TimeKernel:
        return TimeKernel(self.grid, self.times, self.values, self.weights, "K")

    def group_sup_norms(self) -> Dict[str, np.ndarray]:
        return {g: np.max(np.abs(v), axis=(1, 2)) for g, v in self.groups.items()}


def _defect_groups(z: ParametrixTable, t: float) -> Dict[str, np.ndarray]:
    metric = z.metric
    grid = z.grid
    family = z.family
    g = family.columns(t)
    d4 = _columns_derivative(g, grid, 4)
    bil = _bilaplacian_columns(g, metric)
    a = family.coefficient
    s = z.cutoff_weights
    frozen = s * (a[None, :] - a[:, None]) * d4
    lower = -s * (bil - a[:, None] * d4)
    cutoff = np.zeros_like(g)
    rho = metric.conformal_factor()
    for p, q in zip(z.charts.phi, z.charts.psi):
        if np.all(q.samples == 1.0):
            continue
        psi = q.samples[:, None]
        commutator = _bilaplacian_columns(psi * g, metric) - psi * bil
        cutoff -= commutator * (p.samples / rho)[None, :]
    return {"frozen": frozen, "lower_order": lower, "cutoff": cutoff}


def defect(parametrix: ParametrixTable, metric: Optional[MetricSpec] = None, jobs: int = 1) -> DefectTable:
    """
    谱方法计算亏量 K

    参数:
        parametrix: 参数核
        metric: 度量，必须与参数核一致（默认取参数核的度量）
        jobs: 线程数

    返回:
        DefectTable
    """
    if metric is not None and metric is not parametrix.metric:
        if metric.amplitude != parametrix.metric.amplitude or metric.grid != parametrix.grid:
            raise InvalidArgumentError("亏量的度量与参数核不一致")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        per_time = list(pool.map(lambda t: _defect_groups(parametrix, float(t)), parametrix.times))
    groups = {g: np.stack([p[g] for p in per_time]) for g in DEFECT_GROUPS}
    table = DefectTable(parametrix, parametrix.times, groups)
    sups = table.group_sup_norms()
    logger.debug("亏量各组最大值: " + ", ".join(f"{g}={sups[g].max():.3e}" for g in DEFECT_GROUPS))
    return table


def convolve_at(A, B, t: float, weights: np.ndarray, nodes: int = DEFAULT_CONV_NODES) -> np.ndarray:
    """(A∗B)(t) = ∫₀ᵗ ∫ A(x,ξ;t-s) B(ξ,y;s) dV(ξ) ds"""
    s_nodes, s_weights = duhamel_nodes(t, nodes)
    total = np.zeros((weights.size, weights.size))
    for s, w in zip(s_nodes, s_weights):
        if s <= 0.0 or t - s <= 0.0:
            continue
        total += w * compose(A, B, t, s, weights)
    return total


def compose(A, B, t: float, s: float, weights: np.ndarray) -> np.ndarray:
    """单个 s 处的空间复合 ∫ A(x,ξ;t-s) B(ξ,y;s) dV(ξ)"""
    return (A.at(t - s) * weights[None, :]) @ B.at(s)


def spacetime_convolve(A, B, times: Optional[Sequence[float]] = None, nodes: int = DEFAULT_CONV_NODES,
                       jobs: int = 1, tolerance: Optional[float] = 1e-3, label: str = "A*B") -> TimeKernel:
    """
    时空卷积 (A∗B)(x, y; t)，在 t/2 处分段并在两端做 σ⁴ 代换

    参数:
        A, B: 具有 at(t) 的两点核（TimeKernel、AnalyticKernel、ParametrixTable、DefectTable）
        times: 输出时间，默认取 B 的时间
        nodes: 每段 Gauss 节点数
        jobs: 线程数
        tolerance: 在最大时间处与半数节点结果的相对差上限，None 表示不检查
        label: 结果标签

    返回:
        TimeKernel
    """
    if A.grid != B.grid:
        raise InvalidArgumentError("卷积的两个核网格不一致")
    if times is None:
        times = B.times
    times = np.asarray(times, dtype=float)
    weights = A.weights
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        values = list(pool.map(lambda t: convolve_at(A, B, float(t), weights, nodes), times))
    if tolerance is not None:
        t = float(times[-1])
        coarse = convolve_at(A, B, t, weights, max(nodes // 2, 2))
        scale = float(np.max(np.abs(values[-1])))
        if scale > 0:
            gap = float(np.max(np.abs(values[-1] - coarse))) / scale
            if gap > tolerance:
                raise NumericalFailure(
                    f"时空卷积求积在 t={t:.3e} 未达到容差 ({gap:.2e})，请增加节点数",
                    {"t": t, "relative_gap": gap, "nodes": nodes, "hint": "increase nodes"})
    return TimeKernel(A.grid, times, np.stack(values), weights, label)


@dataclass(frozen=True, eq=False)
class NeumannSeries:
    iterates: Tuple[TimeKernel, ...]
    psi: TimeKernel
    sup_norms: Tuple[float, ...]
    fit_exponents: Tuple[float, ...]
    residual: float
    tolerance: float

    @property
    def terms(self) -> int:
        return len(self.iterates)

    @property
    def residual_ok(self) -> bool:
        return self.residual < 10.0 * self.tolerance

    def ratios(self) -> List[float]:
        s = self.sup_norms
        return [s[i + 1] / s[i] if s[i] > 0 else 0.0 for i in range(len(s) - 1)]

    def csv_rows(self):
        for m, (sup, exponent) in enumerate(zip(self.sup_norms, self.fit_exponents), start=1):
            yield m, sup, exponent


def neumann_series(K: DefectTable, tolerance: float = 1e-8, nodes: int = DEFAULT_CONV_NODES,
                   max_terms: int = MAX_TERMS, jobs: int = 1) -> NeumannSeries:
    """
    Ψ = Σ_m K_m，K_1 = K，K_{m} = K ∗ K_{m-1}

    停止准则: max_j t_j·sup|K_m(t_j)| < tolerance。到第 12 项仍不下降，或项数
    用尽仍未达到容差，判定为发散。

    参数:
        K: 亏量
        tolerance: 停止容差
        nodes: 卷积 Gauss 节点数
        max_terms: 最多项数
        jobs: 线程数

    返回:
        NeumannSeries
    """
    if not tolerance > 0:
        raise InvalidArgumentError(f"容差必须为正，收到 {tolerance}")
    current = K.sampled()
    iterates = [current]
    sups = [current.weighted_sup()]
    exponents = [current.singularity_exponent()]
    logger.debug(f"Neumann 第 1 项: 加权最大值 {sups[0]:.3e}")
    while sups[-1] >= tolerance:
        m = len(iterates) + 1
        if m > max_terms:
            raise DivergenceError(f"Neumann 级数 {max_terms} 项后仍未达到容差",
                                  {"sup_norms": sups, "tolerance": tolerance})
        current = spacetime_convolve(K, current, K.times, nodes, jobs, tolerance=None, label=f"K_{m}")
        iterates.append(current)
        sups.append(current.weighted_sup())
        exponents.append(current.singularity_exponent())
        logger.debug(f"Neumann 第 {m} 项: 加权最大值 {sups[-1]:.3e}, 比值 {sups[-1] / sups[-2]:.3e}")
        if m >= DIVERGENCE_CHECK and sups[-1] >= sups[-2]:
            raise DivergenceError(f"Neumann 级数到第 {m} 项仍不下降（T 或 ε 过大）",
                                  {"sup_norms": sups, "tolerance": tolerance})
    psi = iterates[0]
    for term in iterates[1:]:
        psi = psi + term
    psi = TimeKernel(K.grid, K.times, psi.values, K.weights, "Psi")
    # Ψ - K - K∗Ψ
    k_psi = spacetime_convolve(K, psi, K.times, nodes, jobs, tolerance=None)
    gap = psi.values - K.values - k_psi.values
    residual = float(np.max(K.times * np.max(np.abs(gap), axis=(1, 2))))
    if residual >= 10.0 * tolerance:
        logger.warning(f"积分方程残差 {residual:.3e} 超过 10 倍容差")
    logger.info(f"Neumann 级数: {len(iterates)} 项, 积分方程残差 {residual:.3e}")
    return NeumannSeries(tuple(iterates), psi, tuple(sups), tuple(exponents), residual, tolerance)


@dataclass(frozen=True)
class ValidationRow:
    t: float
    row_l1_error: float
    mass_error: float
    pde_residual: float


@dataclass(frozen=True, eq=False)
class AssembledKernel:
    table: KernelTable
    validation: Tuple[ValidationRow, ...]
    passed: bool
    asymmetry: float

    def csv_rows(self):
        for r in self.validation:
            yield r.t, r.row_l1_error, r.mass_error, r.pde_residual


def row_l1_error(matrix: np.ndarray, reference: np.ndarray, weights: np.ndarray) -> float:
    """max_x ∫|b - b_ref| dV / ∫|b_ref| dV"""
    num = np.abs(matrix - reference) @ weights
    den = np.abs(reference) @ weights
    return float(np.max(num / den))


def assemble_kernel(Z: ParametrixTable, psi: NeumannSeries, reference: Optional[ReferenceOperator] = None,
                    nodes: int = DEFAULT_CONV_NODES, jobs: int = 1, l1_limit: float = 1e-3,
                    mass_limit: float = 1e-6, pde_limit: float = 1e-4, rel_step: float = 1e-3) -> AssembledKernel:
    """
    b = Z + Z∗Ψ，并在验证窗口 [4h⁴, T] 内与参考核比对

    验证失败不抛异常，逐时刻误差记录在返回值中。

    参数:
        Z: 参数核
        psi: Neumann 级数
        reference: 参考算子，默认由 Z 的度量构造
        nodes: 卷积 Gauss 节点数
        jobs: 线程数
        l1_limit, mass_limit, pde_limit: 验证阈值
        rel_step: PDE 残差的时间差分相对步长

    返回:
        AssembledKernel
    """
    if Z.grid != psi.psi.grid:
        raise InvalidArgumentError("Z 与 Ψ 的网格不一致")
    weights = Z.weights
    reference = reference or ReferenceOperator(Z.metric)

    def kernel_at(t: float) -> np.ndarray:
        return Z.at(t) + convolve_at(Z, psi.psi, t, weights, nodes)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        values = list(pool.map(lambda t: kernel_at(float(t)), Z.times))
    table = KernelTable(Z.grid, Z.times, np.stack(values), weights,
                        "flat" if Z.metric.is_flat else "perturbed", "parametrix",
                        metadata={"amplitude": Z.metric.amplitude, "n_charts": Z.charts.n_charts})
    start = resolved_window_start(Z.grid)
    rows = []
    for j, t in enumerate(Z.times):
        if t < start:
            continue
        b = table.data[j]
        d = rel_step * t
        dt = (kernel_at(t + d) - kernel_at(t - d)) / (2 * d)
        bil = _bilaplacian_columns(b, Z.metric)
        pde = float(np.max(np.abs(dt + bil)) / np.max(np.abs(bil)))
        rows.append(ValidationRow(float(t), row_l1_error(b, reference.kernel_matrix(float(t)), weights),
                                  float(np.max(np.abs(b @ weights - 1.0))), pde))
    passed = all(r.row_l1_error <= l1_limit and r.mass_error <= mass_limit and r.pde_residual <= pde_limit
                 for r in rows)
    asymmetry = max((table.asymmetry(j) for j in range(len(Z.times))), default=0.0)
    if not passed:
        logger.warning("组装核未通过验证，逐时刻误差见验证表")
    logger.info(f"组装核完成: {len(rows)} 个验证时间, 最大不对称度 {asymmetry:.3e}")
    return AssembledKernel(table, tuple(rows), passed, asymmetry)
