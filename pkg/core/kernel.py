#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
kernel.py

双调和热核模块：欧氏核剖面（振荡积分求积）、平坦环面核（傅里叶级数）、
一致积分常数 ν_k、衰减包络拟合，以及作为真值基准的稠密矩阵指数核。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, linalg, optimize, special

from .errors import (ExplicitTimesError, FitWindowError, InvalidArgumentError,
                     NumericalFailure, QuadratureError, ResolutionError)
from .spectral import (Grid, SpectralField, derivative, derivative_multiplier, laplacian,
                       pointwise_norm, tensor_components)

logger = logging.getLogger("kernel")

# 傅里叶级数最大舍弃项
SERIES_TAIL_LIMIT = 1e-12
# 频域积分上限取 e^{-ξ^4 t} < e^{-FREQUENCY_CUTOFF}
FREQUENCY_CUTOFF = 50.0
# 求积误差超过该值时报错
QUADRATURE_FAILURE = 1e-9
# 参考核的网格上限
REFERENCE_MAX_POINTS = 512
# 验证窗口下限 t >= RESOLUTION_FACTOR * h^4
RESOLUTION_FACTOR = 4.0

METRIC_KINDS = ("flat", "conformal-perturbation")
CONSTRUCTIONS = ("spectral", "parametrix", "matrix-exponential")


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """
    平坦或共形扰动度量 g = ρ² δ，ρ = 1 + ε·profile

    1 维时 Δ_g = ρ^{-1}∂(ρ^{-1}∂)，dV = ρ dx；2 维时 Δ_g = ρ^{-2}Δ，dV = ρ² dx。
    """

    kind: str
    amplitude: float
    profile: SpectralField

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise InvalidArgumentError(f"未知的度量类型: {self.kind}")
        if self.amplitude == 0.0 or self.kind == "flat":
            object.__setattr__(self, "kind", "flat")
            object.__setattr__(self, "amplitude", 0.0)
        rho = self.conformal_factor()
        if rho.min() <= 0.0:
            raise InvalidArgumentError(f"共形因子必须处处为正，最小值 {rho.min():.3e}")

    @classmethod
    def flat(cls, grid: Grid) -> "MetricSpec":
        return cls("flat", 0.0, SpectralField.constant(grid))

    @classmethod
    def conformal(cls, grid: Grid, amplitude: float,
                  profile: Optional[SpectralField] = None) -> "MetricSpec":
        if profile is None:
            if grid.dim == 1:
                profile = SpectralField.from_function(grid, np.cos)
            else:
                profile = SpectralField.from_function(grid, lambda x, y: 0.5 * (np.cos(x) + np.cos(y)))
        return cls("conformal-perturbation", float(amplitude), profile)

    @property
    def grid(self) -> Grid:
        return self.profile.grid

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def is_flat(self) -> bool:
        return self.kind == "flat"

    def conformal_factor(self) -> np.ndarray:
        return 1.0 + self.amplitude * self.profile.samples

    def volume_density(self) -> np.ndarray:
        return self.conformal_factor() ** self.dim

    def volume_weights(self) -> np.ndarray:
        """节点体积权重 dV，展平"""
        return (self.volume_density() * self.grid.cell_volume).ravel()

    def leading_coefficient(self) -> np.ndarray:
        """Δ_g² 的主系数 (g^{11})² = ρ^{-4}"""
        return self.conformal_factor() ** -4

    def laplacian(self, f: SpectralField) -> SpectralField:
        rho = self.conformal_factor()
        if self.is_flat:
            return laplacian(f)
        if self.dim == 1:
            inner = SpectralField(f.grid, derivative(f, 1).samples / rho)
            return SpectralField(f.grid, derivative(inner, 1).samples / rho)
        return SpectralField(f.grid, laplacian(f).samples / rho ** 2)

    def bilaplacian(self, f: SpectralField) -> SpectralField:
        return self.laplacian(self.laplacian(f))

    def arclength_derivative(self, f: SpectralField, k: int) -> SpectralField:
        """1 维弧长导数 (ρ^{-1}∂)^k，即 ∇^k 的唯一分量"""
        if self.dim != 1 and not self.is_flat:
            raise InvalidArgumentError("弧长导数只对 1 维或平坦度量定义")
        if self.is_flat:
            return derivative(f, k)
        rho = self.conformal_factor()
        result = f
        for _ in range(k):
            result = SpectralField(f.grid, derivative(result, 1).samples / rho)
        return result

    def describe(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "grid": self.grid.describe()}


@dataclass(frozen=True, eq=False)
class KernelProfile:
    """径向剖面 D^k b_0(r; t)"""

    dim: int
    deriv_order: int
    t: float
    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if radii.shape != values.shape or radii.ndim != 1:
            raise InvalidArgumentError("半径与取值的形状不一致")
        if np.any(radii < 0) or np.any(np.diff(radii) <= 0):
            raise InvalidArgumentError("半径必须非负且严格递增")
        if not np.all(np.isfinite(values)):
            raise NumericalFailure("核剖面含有非有限值")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)

    def csv_rows(self) -> Iterator[Tuple[float, float]]:
        return zip(self.radii.tolist(), self.values.tolist())


class DecayFit(NamedTuple):
    C: float
    delta: float
    exponent: float
    prefactor_power: float
    points_used: int


@dataclass(frozen=True, eq=False)
class KernelTable:
    """
    两点核 b(x, y; t) 的采样表，构建后不可变。

    translation_invariant 为真时 data[j] 只保存 b(·, 0; t_j)，
    其余点对按平移展开；否则 data[j] 是 (P, P) 的稠密矩阵。
    weights 为节点体积权重（展平），满足 ∫ b(x,y) u(y) dV(y) ≈ Σ b·u·w。
    """

    grid: Grid
    times: np.ndarray
    data: np.ndarray
    weights: np.ndarray
    operator: str
    construction: str
    translation_invariant: bool = False
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.construction not in CONSTRUCTIONS:
            raise InvalidArgumentError(f"未知的构造方式: {self.construction}")
        times = np.array(self.times, dtype=float)
        data = np.array(self.data, dtype=float)
        if data.shape[0] != times.size:
            raise InvalidArgumentError("核表时间维与数据不一致")
        for array in (times, data):
            array.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    def time_index(self, t: float) -> int:
        matches = np.nonzero(np.abs(self.times - t) <= 1e-12 * max(t, 1e-300))[0]
        if matches.size == 0:
            raise ExplicitTimesError(f"核表中没有时间 t={t!r}，请在构建时显式给出")
        return int(matches[0])

    def _shift_indices(self) -> Tuple[np.ndarray, ...]:
        n = self.grid.points_per_axis
        idx = np.indices(self.grid.shape).reshape(self.grid.dim, -1)
        return tuple((idx[a][:, None] - idx[a][None, :]) % n for a in range(self.grid.dim))

    def matrix(self, j: int) -> np.ndarray:
        """第 j 个时间的稠密矩阵 b(x_i, y_l)"""
        if not self.translation_invariant:
            return self.data[j]
        return self.data[j][self._shift_indices()]

    def apply(self, j: int, u: np.ndarray) -> np.ndarray:
        """∫ b(x, y; t_j) u(y) dV(y)"""
        u = np.asarray(u, dtype=float)
        if self.translation_invariant:
            w = float(self.weights[0])
            conv = np.fft.irfftn(np.fft.rfftn(self.data[j]) * np.fft.rfftn(u.reshape(self.grid.shape)),
                                 s=self.grid.shape)
            return conv.reshape(u.shape) * w
        return self.data[j] @ (u.ravel() * self.weights)

    def masses(self, j: int) -> np.ndarray:
        """每一行的积分 ∫ b(x, y; t) dV(y)"""
        if self.translation_invariant:
            return np.full(self.grid.size, float(self.data[j].sum()) * float(self.weights[0]))
        return self.data[j] @ self.weights

    def derivative_integrals(self, j: int, order) -> np.ndarray:
        """∫ D_x^α b(x, y; t) dV(y)，对所有 x"""
        if self.translation_invariant:
            slice_ = derivative(SpectralField(self.grid, self.data[j]), order)
            return np.full(self.grid.size, float(slice_.samples.sum()) * float(self.weights[0]))
        if self.grid.dim != 1:
            raise InvalidArgumentError("稠密核表只支持 1 维导数积分")
        return differentiate_columns(self.data[j], self.grid, int(np.atleast_1d(order)[0])) @ self.weights

    def asymmetry(self, j: int) -> float:
        """max|b(x,y) - b(y,x)| / max|b|"""
        if self.translation_invariant:
            s = self.data[j]
            flipped = np.roll(np.flip(s, axis=tuple(range(s.ndim))), 1, axis=tuple(range(s.ndim)))
            return float(np.max(np.abs(s - flipped)) / np.max(np.abs(s)))
        m = self.data[j]
        return float(np.max(np.abs(m - m.T)) / np.max(np.abs(m)))

    def csv_rows(self, stride: int = 1) -> Iterator[Tuple[int, int, float, float]]:
        """导出行 (x_index, y_index, t, value)，按 stride 抽稀"""
        for j, t in enumerate(self.times):
            m = self.matrix(j)
            for i in range(0, m.shape[0], stride):
                for l in range(0, m.shape[1], stride):
                    yield i, l, float(t), float(m[i, l])


def _quad_checked(func, a: float, b: float, **kwargs) -> Tuple[float, float]:
    value, error = integrate.quad(func, a, b, limit=400, epsabs=1e-15, epsrel=1e-12, **kwargs)[:2]
    return value, error


def _profile_1d(r: float, k: int, t: float) -> Tuple[float, float]:
    upper = (FREQUENCY_CUTOFF / t) ** 0.25
    amplitude = lambda xi: xi ** k * np.exp(-t * xi ** 4)
    # cos(ξr + kπ/2) 的展开
    phase = k % 4
    use_cos = phase in (0, 2)
    sign = {0: 1.0, 1: -1.0, 2: -1.0, 3: 1.0}[phase]
    if r == 0.0:
        if not use_cos:
            return 0.0, 0.0
        value, error = _quad_checked(amplitude, 0.0, upper)
        return sign * value / np.pi, error / np.pi
    # 在驻相尺度处分段
    stationary = (r / (4.0 * t)) ** (1.0 / 3.0)
    edges = [0.0] + ([stationary] if 0.0 < stationary < upper else []) + [upper]
    total, total_error = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, error = _quad_checked(amplitude, a, b, weight="cos" if use_cos else "sin", wvar=r)
        total += value
        total_error += error
    return sign * total / np.pi, total_error / np.pi


def _profile_2d(r: float, k: int, t: float) -> Tuple[float, float]:
    upper = (FREQUENCY_CUTOFF / t) ** 0.25
    if r == 0.0:
        integrand = lambda rho: rho ** (1 + k) * np.exp(-t * rho ** 4) * special.jvp(0, 0.0, k)
        width = upper
    else:
        integrand = lambda rho: rho ** (1 + k) * np.exp(-t * rho ** 4) * special.jvp(0, rho * r, k)
        width = min(np.pi / r, upper / 8.0)
    edges = np.append(np.arange(0.0, upper, width), upper)
    total, total_error = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0.0:
            continue
        value, error = _quad_checked(integrand, a, b)
        total += value
        total_error += error
    return total / (2.0 * np.pi), total_error / (2.0 * np.pi)


def euclidean_kernel_profile(dim: int, k: int, t: float, radii: Sequence[float]) -> KernelProfile:
    """
    欧氏双调和热核 D^k b_0(r; t) 的径向剖面

    1 维用 QUADPACK 振荡权重求积并在驻相尺度 |ξ| ~ (r/4t)^{1/3} 处分段；
    2 维对 Bessel 积分按 π/r 分段求积（k 阶为径向导数）。

    参数:
        dim: 维数 1 或 2
        k: 导数阶数
        t: 时间，必须为正
        radii: 递增的非负半径

    返回:
        KernelProfile
    """
    if not t > 0:
        raise InvalidArgumentError(f"时间 t 必须为正，收到 {t}")
    if dim not in (1, 2) or k < 0:
        raise InvalidArgumentError(f"非法参数 dim={dim}, k={k}")
    evaluate = _profile_1d if dim == 1 else _profile_2d
    values = []
    worst = 0.0
    for r in np.asarray(radii, dtype=float):
        value, error = evaluate(float(r), int(k), float(t))
        worst = max(worst, error)
        if error > QUADRATURE_FAILURE:
            raise QuadratureError(f"核剖面求积未收敛 (r={r}, t={t})",
                                  {"radius": float(r), "t": float(t), "error_estimate": error})
        values.append(value)
    logger.debug(f"欧氏核剖面 dim={dim} k={k} t={t}: {len(values)} 个半径，最大误差估计 {worst:.2e}")
    return KernelProfile(dim, k, float(t), np.asarray(radii, dtype=float), np.asarray(values))


def euclidean_mass(dim: int, t: float, radius: float) -> float:
    """
    ∫_{|x|<=R} b_0(x; t) dx，在频域上精确化为一维积分
    """
    upper = (FREQUENCY_CUTOFF / t) ** 0.25
    if dim == 1:
        integrand = lambda xi: np.exp(-t * xi ** 4) * radius * np.sinc(xi * radius / np.pi)
        scale = 2.0 / np.pi
    else:
        integrand = lambda rho: np.exp(-t * rho ** 4) * radius * special.j1(rho * radius)
        scale = 1.0
    width = min(np.pi / radius, upper / 8.0)
    edges = np.append(np.arange(0.0, upper, width), upper)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += _quad_checked(integrand, a, b)[0]
    return scale * total


def _resolution_check(grid: Grid, t: float) -> None:
    k_cut = np.pi / grid.spacing
    if np.exp(-k_cut ** 4 * t) > SERIES_TAIL_LIMIT:
        needed = grid.period / np.pi * (np.log(1.0 / SERIES_TAIL_LIMIT) / t) ** 0.25
        required = int(2 ** np.ceil(np.log2(max(needed, 16))))
        raise ResolutionError(
            f"t={t:.3e} 太小，级数需要超出网格的模；至少需要每轴 {required} 个点", required)


def flat_slice(grid: Grid, t: float, order=None) -> np.ndarray:
    """平坦环面核切片 b(·, 0; t)（可带 x 导数）"""
    multiplier = np.exp(-grid.k_squared() ** 2 * t) * grid.size / grid.volume
    coeffs = multiplier.astype(complex)
    if order is not None:
        coeffs = coeffs * derivative_multiplier(grid, order)
    return np.fft.irfftn(coeffs, s=grid.shape)


def flat_torus_kernel(grid: Grid, times: Sequence[float], jobs: int = 1) -> KernelTable:
    """
    平坦环面双调和热核 Σ e^{-|ξ|^4 t} e^{iξ(x-y)} / Vol

    参数:
        grid: 网格
        times: 正的时间列表
        jobs: 线程数

    返回:
        平移不变的 KernelTable
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise InvalidArgumentError("所有时间必须为正")
    for t in times:
        _resolution_check(grid, float(t))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        data = list(pool.map(lambda t: flat_slice(grid, float(t)), times))
    weights = np.full(grid.size, grid.cell_volume)
    logger.info(f"平坦环面核构建完成: 网格 {grid.shape}, {times.size} 个时间")
    return KernelTable(grid, times, np.stack(data), weights, "flat", "spectral",
                       translation_invariant=True)


def _resample_periodic(values: np.ndarray, size: int) -> np.ndarray:
    """周期序列的谱插值（零填充）"""
    n = values.size
    coeffs = np.fft.rfft(values)
    padded = np.zeros(size // 2 + 1, dtype=complex)
    padded[: n // 2 + 1] = coeffs
    padded[n // 2] *= 0.5
    return np.fft.irfft(padded, n=size) * (size / n)


def abs_integral_1d(values: np.ndarray, period: float, density: Optional[np.ndarray] = None,
                    upsample: int = 8, mask: Optional[np.ndarray] = None) -> float:
    """
    ∫ |f| ρ dx，f 为带限周期函数

    在加密网格上用精确原函数对同号区间积分，符号变化处用线性插值定根、
    三次 Hermite 插值取原函数值。mask 指定参与积分的加密网格区间。
    """
    m = values.size * upsample
    f = _resample_periodic(np.asarray(values, dtype=float), m)
    rho = np.ones(m) if density is None else _resample_periodic(np.asarray(density, dtype=float), m)
    g = f * rho
    h = period / m
    coeffs = np.fft.rfft(g)
    mean = coeffs[0].real / m
    k = 2.0 * np.pi / period * np.arange(coeffs.size)
    anti = np.zeros_like(coeffs)
    anti[1:] = coeffs[1:] / (1j * k[1:])
    anti[-1] = 0.0
    x = np.arange(m) * h
    G = np.fft.irfft(anti, n=m) + mean * x
    g_next = np.roll(g, -1)
    G_next = np.append(G[1:], G[0] + mean * period)
    s0 = np.sign(g)
    s1 = np.sign(g_next)
    s0 = np.where(s0 == 0, s1, s0)
    crossing = s0 * s1 < 0
    contrib = s0 * (G_next - G)
    if np.any(crossing):
        g0, g1 = g[crossing], g_next[crossing]
        theta = g0 / (g0 - g1)
        # 三次 Hermite 插值
        h00 = 2 * theta ** 3 - 3 * theta ** 2 + 1
        h10 = theta ** 3 - 2 * theta ** 2 + theta
        h01 = -2 * theta ** 3 + 3 * theta ** 2
        h11 = theta ** 3 - theta ** 2
        Gr = h00 * G[crossing] + h10 * h * g0 + h01 * G_next[crossing] + h11 * h * g1
        contrib[crossing] = s0[crossing] * (Gr - G[crossing]) + s1[crossing] * (G_next[crossing] - Gr)
    if mask is not None:
        contrib = contrib[np.asarray(mask, dtype=bool)]
    return float(np.sum(contrib))


def _upsample_2d(values: np.ndarray, factor: int) -> np.ndarray:
    n = values.shape[0]
    m = n * factor
    coeffs = np.fft.fft2(values)
    padded = np.zeros((m, m), dtype=complex)
    half = n // 2
    padded[:half, :half] = coeffs[:half, :half]
    padded[:half, -half:] = coeffs[:half, -half:]
    padded[-half:, :half] = coeffs[-half:, :half]
    padded[-half:, -half:] = coeffs[-half:, -half:]
    return np.real(np.fft.ifft2(padded)) * (m * m) / (n * n)


# ν_k 计算用的周期盒子
NU_BOX_PERIOD = 100.0
NU_BOX_POINTS = {1: 4096, 2: 256}
NU_UPSAMPLE = {1: 8, 2: 4}


@lru_cache(maxsize=64)
def nu_constant(dim: int, k: int, radius: float = 40.0) -> float:
    """
    ν_k = ∫ |D^k b_0(0, y; 1)| dy

    在周期为 NU_BOX_PERIOD 的大盒子上取 t=1 的核（像项小于 e^{-80}），
    只对 |y| <= radius 的部分积分。

    参数:
        dim: 维数
        k: 导数阶数 0..6
        radius: 截断半径

    返回:
        ν_k
    """
    if dim not in (1, 2) or not 0 <= k <= 6:
        raise InvalidArgumentError(f"ν_k 只对 dim∈{{1,2}}, 0<=k<=6 定义，收到 dim={dim}, k={k}")
    if not 0 < radius <= NU_BOX_PERIOD / 2:
        raise InvalidArgumentError(f"截断半径必须在 (0, {NU_BOX_PERIOD / 2}] 内")
    grid = Grid(dim, NU_BOX_POINTS[dim], NU_BOX_PERIOD)
    base = SpectralField(grid, flat_slice(grid, 1.0))
    components = tensor_components(base, k)
    if dim == 1:
        m = grid.points_per_axis * NU_UPSAMPLE[1]
        y = np.arange(m) * (grid.period / m)
        dist = np.minimum(y, grid.period - y)
        dist_next = np.roll(dist, -1)
        mask = (dist <= radius) & (dist_next <= radius)
        value = abs_integral_1d(components[0], grid.period, upsample=NU_UPSAMPLE[1], mask=mask)
    else:
        factor = NU_UPSAMPLE[2]
        norm = pointwise_norm([_upsample_2d(c, factor) for c in components])
        m = norm.shape[0]
        y = np.arange(m) * (grid.period / m)
        d = np.minimum(y, grid.period - y)
        inside = (d[:, None] ** 2 + d[None, :] ** 2) <= radius ** 2
        value = float(np.sum(norm[inside])) * (grid.period / m) ** 2
    logger.debug(f"ν_{k}(dim={dim}, R={radius}) = {value:.15g}")
    return value


def decay_fit(profile: KernelProfile, window: Tuple[float, Optional[float]] = (6.0, None),
              floor: float = 1e-13) -> DecayFit:
    """
    包络拟合 log|b| ≈ log C + c·log ρ - δ ρ^p，ρ = t^{-1/4} r

    剖面有符号变化时只用 |b| 的局部极大值点拟合包络。

    参数:
        profile: 核剖面
        window: 缩放半径窗口 (下限, 上限)
        floor: 相对浮点下限，低于 floor·max|b| 的值不参与拟合

    返回:
        DecayFit(C, delta, exponent, prefactor_power, points_used)
    """
    rho = profile.radii * profile.t ** -0.25
    values = np.abs(profile.values)
    scale = float(values.max()) if values.size else 0.0
    lo, hi = window
    inside = (rho >= lo) & (values > floor * scale)
    if hi is not None:
        inside &= rho <= hi
    if np.count_nonzero(inside) < 4:
        raise FitWindowError(f"拟合窗口内可用点不足 ({np.count_nonzero(inside)} 个)",
                             {"window": list(window), "floor": floor})
    signs = np.sign(profile.values[inside])
    r_fit, v_fit = rho[inside], values[inside]
    if np.any(signs[1:] != signs[:-1]):
        peaks = [i for i in range(1, v_fit.size - 1) if v_fit[i] >= v_fit[i - 1] and v_fit[i] >= v_fit[i + 1]]
        if len(peaks) >= 4:
            r_fit, v_fit = r_fit[peaks], v_fit[peaks]

    def model(r, log_c, power, delta, exponent):
        return log_c + power * np.log(r) - delta * r ** exponent

    p0 = (float(np.log(v_fit[0])), 0.0, 0.3, 1.5)
    try:
        params, _ = optimize.curve_fit(model, r_fit, np.log(v_fit), p0=p0,
                                       bounds=([-np.inf, -5.0, 1e-6, 0.5], [np.inf, 5.0, 50.0, 3.0]),
                                       maxfev=20000)
    except (RuntimeError, ValueError) as e:
        raise FitWindowError(f"包络拟合失败: {e}", {"points": int(r_fit.size)})
    log_c, power, delta, exponent = (float(p) for p in params)
    return DecayFit(float(np.exp(log_c)), delta, exponent, power, int(r_fit.size))


def differentiate_columns(matrix: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    """对矩阵的每一列沿 x（第 0 轴）做 k 阶谱导数，1 维"""
    if k == 0:
        return matrix
    coeffs = np.fft.rfft(matrix, axis=0)
    mult = derivative_multiplier(grid, k)
    return np.fft.irfft(coeffs * mult[:, None], n=grid.points_per_axis, axis=0)


def spectral_derivative_matrix(grid: Grid) -> np.ndarray:
    """1 维傅里叶一阶导数矩阵（Nyquist 模置零，反对称）"""
    return differentiate_columns(np.eye(grid.points_per_axis), grid, 1)


class ReferenceOperator:
    """
    L = Δ_g² 的稠密谱离散及其特征分解，exp(-tL) 可在任意 t 求值。

    常数模被精确分离出来，保证质量守恒只受舍入误差影响；Nyquist 模
    （被一阶谱导数湮灭）在加权正交补中赋予平坦情形的特征值 k_N^4。
    """

    def __init__(self, metric: MetricSpec):
        grid = metric.grid
        if grid.dim != 1:
            raise InvalidArgumentError("参考核只支持 1 维")
        if grid.points_per_axis > REFERENCE_MAX_POINTS:
            raise InvalidArgumentError(f"参考核网格不能超过 {REFERENCE_MAX_POINTS} 点")
        self.metric = metric
        self.grid = grid
        n = grid.points_per_axis
        rho = metric.conformal_factor()
        self.weights = metric.volume_weights()
        d = spectral_derivative_matrix(grid)
        self.arclength_matrix = d / rho[:, None]
        lap = self.arclength_matrix @ self.arclength_matrix
        op = lap @ lap
        # Nyquist 方向
        w = self.weights
        v = (-1.0) ** np.arange(n)
        v = v - (w @ v) / w.sum()
        k_nyquist = np.pi / grid.spacing
        penalty = k_nyquist ** 4 * float(np.mean(rho ** -4))
        op = op + penalty * np.outer(v, w * v) / float(v @ (w * v))
        sqrt_w = np.sqrt(w)
        sym = (sqrt_w[:, None] * op) / sqrt_w[None, :]
        sym = 0.5 * (sym + sym.T)
        u0 = sqrt_w / np.linalg.norm(sqrt_w)
        try:
            basis = linalg.null_space(u0[None, :])
            eigvals, eigvecs = linalg.eigh(basis.T @ sym @ basis)
        except (linalg.LinAlgError, ValueError) as e:
            raise NumericalFailure(f"特征分解失败: {e}", {"points": n})
        self.eigenvalues = np.concatenate([[0.0], np.maximum(eigvals, 0.0)])
        self.eigenvectors = np.column_stack([u0, basis @ eigvecs])
        self.sqrt_weights = sqrt_w
        logger.debug(f"参考算子特征分解完成: N={n}, 最大特征值 {self.eigenvalues.max():.3e}")

    def symmetric_exponential(self, t: float) -> np.ndarray:
        q = self.eigenvectors
        return (q * np.exp(-t * self.eigenvalues)) @ q.T

    def kernel_matrix(self, t: float) -> np.ndarray:
        """b(x_i, y_l; t) = w_i^{-1/2} [Q e^{-tΛ} Q^T]_{il} w_l^{-1/2}"""
        s = 1.0 / self.sqrt_weights
        return s[:, None] * self.symmetric_exponential(t) * s[None, :]

    def apply(self, u: np.ndarray, t: float) -> np.ndarray:
        """exp(-tL) u"""
        q = self.eigenvectors
        coeffs = q.T @ (self.sqrt_weights * np.asarray(u, dtype=float).ravel())
        return (q @ (np.exp(-t * self.eigenvalues) * coeffs)) / self.sqrt_weights

    def mode_coefficients(self, u: np.ndarray) -> np.ndarray:
        return self.eigenvectors.T @ (self.sqrt_weights * np.asarray(u, dtype=float).ravel())

    def from_modes(self, coeffs: np.ndarray) -> np.ndarray:
        return (self.eigenvectors @ coeffs) / self.sqrt_weights


def reference_kernel(metric: MetricSpec, grid: Grid, times: Sequence[float], jobs: int = 1,
                     operator: Optional[ReferenceOperator] = None) -> KernelTable:
    """
    稠密矩阵指数参考核 b = exp(-tL) / w

    参数:
        metric: 度量（1 维）
        grid: 网格，必须与度量一致
        times: 正的时间
        jobs: 线程数
        operator: 可复用的已分解算子

    返回:
        稠密 KernelTable
    """
    if metric.grid != grid:
        raise InvalidArgumentError("度量与网格不一致")
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise InvalidArgumentError("所有时间必须为正")
    op = operator or ReferenceOperator(metric)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        data = list(pool.map(lambda t: op.kernel_matrix(float(t)), times))
    logger.info(f"参考核构建完成: {metric.kind}, ε={metric.amplitude}, N={grid.points_per_axis}, {times.size} 个时间")
    return KernelTable(grid, times, np.stack(data), op.weights.copy(),
                       "flat" if metric.is_flat else "perturbed", "matrix-exponential",
                       metadata={"amplitude": metric.amplitude})


@dataclass(frozen=True)
class ConvergenceRow:
    t: float
    minimum: float
    maximum: float
    gap: float


@dataclass(frozen=True)
class ConvergenceTable:
    """I_k(t) = t^{k/4} ∫ |∇^k b_g(x, ·; t)| dV 对 ν_k 的收敛记录"""

    k: int
    nu: float
    rows: Tuple[ConvergenceRow, ...]
    dropped: Tuple[float, ...]

    @property
    def final_gap(self) -> float:
        return self.rows[-1].gap if self.rows else float("nan")


def resolved_window_start(grid: Grid) -> float:
    return RESOLUTION_FACTOR * grid.spacing ** 4


def rescaling_convergence(metric: MetricSpec, k: int, t_sequence: Sequence[float],
                          reference_points: int = 8, upsample: int = 8,
                          operator: Optional[ReferenceOperator] = None) -> ConvergenceTable:
    """
    I_k(t) 随 t → 0 收敛到 ν_k 的过程

    参数:
        metric: 1 维度量
        k: 导数阶数
        t_sequence: 递减的时间序列
        reference_points: 取样的 x 数目
        upsample: 行积分加密倍数
        operator: 可复用的参考算子

    返回:
        ConvergenceTable；低于分辨率的时间被丢弃并记录
    """
    grid = metric.grid
    op = operator or ReferenceOperator(metric)
    nu = nu_constant(1, k)
    floor = resolved_window_start(grid)
    rows: List[ConvergenceRow] = []
    dropped: List[float] = []
    n = grid.points_per_axis
    picks = np.arange(0, n, max(1, n // reference_points))
    rho = metric.conformal_factor()
    deriv = np.linalg.matrix_power(op.arclength_matrix, k) if k else None
    for t in t_sequence:
        t = float(t)
        if t < floor:
            dropped.append(t)
            continue
        kernel = op.kernel_matrix(t)
        if deriv is not None:
            kernel = deriv @ kernel
        values = []
        for i in picks:
            integral = abs_integral_1d(kernel[i], grid.period, density=rho, upsample=upsample)
            values.append(t ** (k / 4.0) * integral)
        values = np.asarray(values)
        gap = float(np.max(np.abs(values - nu)) / nu)
        rows.append(ConvergenceRow(t, float(values.min()), float(values.max()), gap))
        logger.debug(f"I_{k}(t={t:.3e}) ∈ [{values.min():.10f}, {values.max():.10f}], 相对偏差 {gap:.3e}")
    if dropped:
        logger.warning(f"{len(dropped)} 个时间低于分辨率下限 {floor:.3e}，已截断序列")
    return ConvergenceTable(k, nu, tuple(rows), tuple(dropped))
