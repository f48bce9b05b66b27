#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
spectral.py

周期网格上的谱计算基础模块：网格、谱场、时空场、谱导数、
Hölder 半范数估计以及 2/3 规则去混叠乘积。其余所有模块都在这里的
类型之上计算。

系数约定：coefficients 为 numpy.fft.rfftn 的未归一化结果，
常数模系数等于 samples.sum()。
"""

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InternalError, InvalidArgumentError

logger = logging.getLogger("spectral")

# 共轭对称漂移上限
SYMMETRY_DRIFT_LIMIT = 1e-10
# 几何时间网格默认公比
DEFAULT_TIME_RATIO = 2.0 ** 0.25
# 每轴点数不超过该值时枚举全部点对
ALL_PAIRS_LIMIT = 256
# 超过上面的阈值时随机保留的位移数
SAMPLED_OFFSETS = 512

Order = Union[int, Sequence[int]]


@dataclass(frozen=True)
class Grid:
    """等距周期网格，dim 为 1 或 2"""

    dim: int
    points_per_axis: int
    period: float = 2.0 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidArgumentError(f"网格维数必须为 1 或 2，收到 {self.dim}")
        n = self.points_per_axis
        if n < 16 or n & (n - 1):
            raise InvalidArgumentError(f"每轴点数必须是不小于 16 的 2 的幂，收到 {n}")
        if not self.period > 0:
            raise InvalidArgumentError(f"周期必须为正，收到 {self.period}")

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def volume(self) -> float:
        return self.period ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def coefficient_shape(self) -> Tuple[int, ...]:
        n = self.points_per_axis
        return (n,) * (self.dim - 1) + (n // 2 + 1,)

    def nodes(self) -> np.ndarray:
        """单轴节点坐标"""
        return np.arange(self.points_per_axis) * self.spacing

    def mesh(self) -> Tuple[np.ndarray, ...]:
        """全部节点坐标（ij 索引）"""
        axes = [self.nodes()] * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def mode_indices(self) -> Tuple[np.ndarray, ...]:
        """各轴整数模指标，形状可广播到系数数组"""
        n = self.points_per_axis
        result = []
        for axis in range(self.dim):
            if axis == self.dim - 1:
                m = np.fft.rfftfreq(n, 1.0 / n)
            else:
                m = np.fft.fftfreq(n, 1.0 / n)
            shape = [1] * self.dim
            shape[axis] = m.size
            result.append(np.round(m).reshape(shape))
        return tuple(result)

    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        scale = 2.0 * np.pi / self.period
        return tuple(scale * m for m in self.mode_indices())

    def k_squared(self) -> np.ndarray:
        total = np.zeros(self.coefficient_shape)
        for k in self.wavenumbers():
            total = total + k ** 2
        return total

    def nyquist_masks(self) -> Tuple[np.ndarray, ...]:
        half = self.points_per_axis // 2
        return tuple(np.abs(m) == half for m in self.mode_indices())

    def dealias_mask(self) -> np.ndarray:
        """2/3 规则保留的模"""
        cutoff = (self.points_per_axis - 1) // 3
        mask = np.ones(self.coefficient_shape, dtype=bool)
        for m in self.mode_indices():
            mask = mask & (np.abs(m) <= cutoff)
        return mask

    def describe(self) -> dict:
        return {"dim": self.dim, "points_per_axis": self.points_per_axis, "period": self.period}


@dataclass(frozen=True, eq=False)
class SpectralField:
    """
    周期实标量场：节点采样值及其傅里叶系数。

    系数在构造时同步，发布后不再修改。
    """

    grid: Grid
    samples: np.ndarray
    coefficients: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.shape != self.grid.shape:
            raise InvalidArgumentError(f"采样形状 {samples.shape} 与网格 {self.grid.shape} 不符")
        samples.flags.writeable = False
        coefficients = np.fft.rfftn(samples)
        coefficients.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "SpectralField":
        values = func(*grid.mesh())
        return cls(grid, np.broadcast_to(values, grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float = 0.0) -> "SpectralField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_coefficients(cls, grid: Grid, coefficients: np.ndarray) -> "SpectralField":
        """
        由系数构造场，并检查共轭对称漂移

        参数:
            grid: 网格
            coefficients: rfftn 形式的系数

        返回:
            新的谱场
        """
        result = cls(grid, np.fft.irfftn(coefficients, s=grid.shape))
        scale = max(float(np.max(np.abs(coefficients))), 1e-300)
        drift = float(np.max(np.abs(result.coefficients - coefficients))) / scale
        if drift > SYMMETRY_DRIFT_LIMIT:
            raise InternalError(f"共轭对称漂移 {drift:.3e} 超过上限", {"drift": drift})
        return result

    def mean(self) -> float:
        return float(self.coefficients.flat[0].real) / self.grid.size

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def integral(self, density: Optional[np.ndarray] = None) -> float:
        values = self.samples if density is None else self.samples * density
        return float(np.sum(values)) * self.grid.cell_volume

    def _check_grid(self, other: "SpectralField") -> None:
        if other.grid != self.grid:
            raise InvalidArgumentError("两个场的网格不一致")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check_grid(other)
            return SpectralField(self.grid, self.samples + other.samples)
        return SpectralField(self.grid, self.samples + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check_grid(other)
            return SpectralField(self.grid, self.samples - other.samples)
        return SpectralField(self.grid, self.samples - float(other))

    def __neg__(self):
        return SpectralField(self.grid, -self.samples)

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            self._check_grid(other)
            return SpectralField(self.grid, self.samples * other.samples)
        return SpectralField(self.grid, self.samples * float(other))

    __rmul__ = __mul__


def _normalize_order(grid: Grid, order: Order) -> Tuple[int, ...]:
    if isinstance(order, (int, np.integer)):
        order = (int(order),) + (0,) * (grid.dim - 1)
    order = tuple(int(o) for o in order)
    if len(order) != grid.dim:
        raise InvalidArgumentError(f"多重指标长度 {len(order)} 与维数 {grid.dim} 不符")
    if any(o < 0 for o in order):
        raise InvalidArgumentError(f"导数阶数不能为负: {order}")
    return order


def derivative_multiplier(grid: Grid, order: Order) -> np.ndarray:
    """(iξ)^order 乘子；奇数阶时 Nyquist 模置零以保持实值"""
    order = _normalize_order(grid, order)
    multiplier = np.ones(grid.coefficient_shape, dtype=complex)
    for k, nyquist, o in zip(grid.wavenumbers(), grid.nyquist_masks(), order):
        if o == 0:
            continue
        factor = (1j * k) ** o
        if o % 2:
            factor = np.where(nyquist, 0.0, factor)
        multiplier = multiplier * factor
    return multiplier


def apply_multiplier(f: SpectralField, multiplier: np.ndarray) -> SpectralField:
    return SpectralField.from_coefficients(f.grid, f.coefficients * multiplier)


def derivative(f: SpectralField, order: Order) -> SpectralField:
    """
    谱导数，系数乘以 (iξ)^order

    参数:
        f: 输入场
        order: 多重指标（1 维时可以是整数）

    返回:
        导数场
    """
    return apply_multiplier(f, derivative_multiplier(f.grid, order))


def laplacian(f: SpectralField) -> SpectralField:
    return apply_multiplier(f, -f.grid.k_squared())


def truncate(f: SpectralField, mask: Optional[np.ndarray] = None) -> SpectralField:
    """按掩码截断谱（默认 2/3 规则）"""
    if mask is None:
        mask = f.grid.dealias_mask()
    return apply_multiplier(f, mask)


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """
    2/3 规则去混叠乘积：输入和输出都做谱截断

    参数:
        f, g: 同一网格上的场

    返回:
        截断后的乘积
    """
    if f.grid != g.grid:
        raise InvalidArgumentError("去混叠乘积要求两个场位于同一网格")
    mask = f.grid.dealias_mask()
    product = truncate(f, mask).samples * truncate(g, mask).samples
    return truncate(SpectralField(f.grid, product), mask)


def tensor_components(f: SpectralField, k: int) -> List[np.ndarray]:
    """
    ∇^k f 的分量，已乘以对称张量的重数权重，平方和即逐点张量范数平方
    """
    if k < 0:
        raise InvalidArgumentError(f"导数阶数不能为负: {k}")
    if f.grid.dim == 1:
        return [derivative(f, k).samples]
    return [np.sqrt(comb(k, a)) * derivative(f, (a, k - a)).samples for a in range(k + 1)]


def pointwise_norm(components: Sequence[np.ndarray]) -> np.ndarray:
    return np.sqrt(sum(c ** 2 for c in components))


def _offsets(grid: Grid, cap: float, seed: int) -> List[Tuple[Tuple[int, ...], float]]:
    h = grid.spacing
    reach = int(np.floor(cap / h + 1e-12))
    offsets = []
    if grid.dim == 1:
        for m in range(1, reach + 1):
            offsets.append(((m,), m * h))
    else:
        for mx in range(0, reach + 1):
            for my in range(-reach, reach + 1):
                if mx == 0 and my <= 0:
                    continue
                dist = h * np.hypot(mx, my)
                if dist <= cap + 1e-12:
                    offsets.append(((mx, my), dist))
    if grid.points_per_axis > ALL_PAIRS_LIMIT and len(offsets) > SAMPLED_OFFSETS:
        near = [o for o in offsets if o[1] <= 2.0 * h + 1e-12]
        far = [o for o in offsets if o[1] > 2.0 * h + 1e-12]
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(far), size=SAMPLED_OFFSETS - len(near), replace=False)
        offsets = near + [far[i] for i in sorted(picked)]
    return offsets


def tensor_holder_seminorm(components: Sequence[np.ndarray], grid: Grid, alpha: float,
                           cap: Optional[float] = None, seed: int = 0) -> float:
    """
    张量值场的 Hölder 半范数，点对距离取周期距离并限制在 cap 以内
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"Hölder 指数必须在 (0,1) 内，收到 {alpha}")
    cap = grid.period / 4.0 if cap is None else float(cap)
    if not 0.0 < cap <= grid.period / 2.0:
        raise InvalidArgumentError(f"点对上限 {cap} 必须在 (0, 半周期] 内")
    best = 0.0
    axes = tuple(range(grid.dim))
    for shift, dist in _offsets(grid, cap, seed):
        total = np.zeros(grid.shape)
        for c in components:
            total += (np.roll(c, shift, axis=axes) - c) ** 2
        best = max(best, float(np.sqrt(total.max())) / dist ** alpha)
    return best


def holder_seminorm(f: SpectralField, alpha: float, cap: Optional[float] = None,
                    seed: int = 0) -> float:
    """
    标量场的 C^α 半范数：网格点对 0 < dist <= cap 上 |f(x)-f(y)|/dist^α 的最大值

    参数:
        f: 输入场
        alpha: Hölder 指数 (0,1)
        cap: 点对距离上限，默认四分之一周期
        seed: 大网格随机抽样的种子

    返回:
        半范数估计值
    """
    return tensor_holder_seminorm([f.samples], f.grid, alpha, cap, seed)


def geometric_times(T: float, count: int, ratio: float = DEFAULT_TIME_RATIO) -> np.ndarray:
    """几何时间网格 t_j = T·r^{-j}，按升序返回"""
    if not T > 0:
        raise InvalidArgumentError(f"T 必须为正，收到 {T}")
    if count < 1 or not ratio > 1.0:
        raise InvalidArgumentError(f"非法的时间网格参数 count={count}, ratio={ratio}")
    return np.sort(T * ratio ** -np.arange(count, dtype=float))


def geometric_times_between(t_min: float, T: float, ratio: float = DEFAULT_TIME_RATIO) -> np.ndarray:
    """从 T 向下按公比铺到不小于 t_min 为止"""
    if not 0 < t_min <= T:
        raise InvalidArgumentError(f"需要 0 < t_min <= T，收到 {t_min}, {T}")
    count = int(np.floor(np.log(T / t_min) / np.log(ratio) + 1e-9)) + 1
    return geometric_times(T, count, ratio)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """几何时间网格上的谱场族 u(·, t_j)"""

    times: np.ndarray
    slices: Tuple[SpectralField, ...]

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        slices = tuple(self.slices)
        if times.ndim != 1 or times.size != len(slices) or times.size == 0:
            raise InvalidArgumentError("时间数与切片数不一致")
        if np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("时间必须为正且严格递增")
        grid = slices[0].grid
        if any(s.grid != grid for s in slices):
            raise InvalidArgumentError("所有切片必须共享同一网格")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "slices", slices)

    @property
    def grid(self) -> Grid:
        return self.slices[0].grid

    def __len__(self) -> int:
        return len(self.slices)

    def samples(self) -> np.ndarray:
        return np.stack([s.samples for s in self.slices])

    @classmethod
    def from_samples(cls, grid: Grid, times: Iterable[float], samples: np.ndarray) -> "SpaceTimeField":
        return cls(np.asarray(times, dtype=float), tuple(SpectralField(grid, s) for s in samples))

    @classmethod
    def from_function(cls, grid: Grid, times: Iterable[float],
                      func: Callable[..., np.ndarray]) -> "SpaceTimeField":
        """func(t, *mesh) 给出 t 时刻的采样值"""
        times = np.asarray(times, dtype=float)
        mesh = grid.mesh()
        slices = tuple(SpectralField(grid, np.broadcast_to(func(t, *mesh), grid.shape)) for t in times)
        return cls(times, slices)

    @classmethod
    def zeros(cls, grid: Grid, times: Iterable[float]) -> "SpaceTimeField":
        times = np.asarray(times, dtype=float)
        return cls(times, tuple(SpectralField.constant(grid) for _ in times))

    def map(self, func: Callable[[SpectralField], SpectralField]) -> "SpaceTimeField":
        return SpaceTimeField(self.times, tuple(func(s) for s in self.slices))

    def window(self, t_max: float) -> "SpaceTimeField":
        keep = [i for i, t in enumerate(self.times) if t <= t_max * (1 + 1e-12)]
        if not keep:
            raise InvalidArgumentError(f"时间窗口 (0, {t_max}] 内没有切片")
        return SpaceTimeField(self.times[keep], tuple(self.slices[i] for i in keep))

    def _check(self, other: "SpaceTimeField") -> None:
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise InvalidArgumentError("两个时空场的网格或时间不一致")

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        self._check(other)
        return SpaceTimeField(self.times, tuple(a + b for a, b in zip(self.slices, other.slices)))

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        self._check(other)
        return SpaceTimeField(self.times, tuple(a - b for a, b in zip(self.slices, other.slices)))

    def __mul__(self, scalar: float) -> "SpaceTimeField":
        return SpaceTimeField(self.times, tuple(s * scalar for s in self.slices))

    __rmul__ = __mul__
