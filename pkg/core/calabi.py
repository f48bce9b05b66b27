#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
calabi.py

复一维环面上的 Calabi 流 ∂φ/∂t = R_φ - R̲：

    δ 带检查、数量曲率、非线性项 R(φ) = R_φ - R̲ + Δ²φ、Calabi 能量，
    积分因子 Euler 半隐式步进（Kähler 条件守护的拒绝减半，逐步记录能量），
    Duhamel 不动点迭代 ψ = V[R(ψ + S u₀)]，以及光滑化实验。

坐标归一化使 ∂_z∂_z̄ 等同于实 Laplace 算子 Δ，于是 h = 1 + Δφ，
R_φ = -h^{-1} Δ log h，线性化方程恰为 ∂_t + Δ²。
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import interpolate

from .duhamel import DEFAULT_NODES, Propagator, Source, propagate_initial, volume_potential
from .errors import (DeltaBandViolation, InvalidArgumentError, KahlerViolation,
                     NoContractionError, StepRejected)
from .kernel import MetricSpec
from .norms import DEFAULT_ALPHA, SmoothingProfile, smoothing_profile, x_norm
from .spectral import (Grid, SpaceTimeField, SpectralField, derivative, geometric_times,
                       laplacian, truncate)

logger = logging.getLogger("calabi")

SOLVERS = ("semi-implicit", "duhamel-fixed-point")
DT_POLICIES = ("fixed", "graded")
# 能量单调的相对容差
ENERGY_TOLERANCE = 1e-12
# 低于此绝对量的能量变化视为舍入噪声
ENERGY_FLOOR = 1e-24
# 连续多少次压缩因子 >= 1 判定为不压缩
NO_CONTRACTION_STREAK = 3


@dataclass(frozen=True, eq=False)
class KahlerPotential:
    """均值为零的 Kähler 势 φ，度量密度 h = 1 + Δφ"""

    phi: SpectralField
    background: Optional[MetricSpec] = None

    def __post_init__(self):
        coeffs = np.array(self.phi.coefficients)
        if coeffs.flat[0] != 0.0:
            coeffs.flat[0] = 0.0
            object.__setattr__(self, "phi", SpectralField.from_coefficients(self.phi.grid, coeffs))
        if self.background is None:
            object.__setattr__(self, "background", MetricSpec.flat(self.phi.grid))
        elif not self.background.is_flat:
            raise InvalidArgumentError("Calabi 流只支持平坦背景度量")

    @classmethod
    def zero(cls, grid: Grid) -> "KahlerPotential":
        return cls(SpectralField.constant(grid))

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    def density(self) -> np.ndarray:
        return 1.0 + laplacian(self.phi).samples

    def min_h(self) -> float:
        return float(self.density().min())

    def max_h(self) -> float:
        return float(self.density().max())

    def require_kahler(self) -> np.ndarray:
        h = self.density()
        if h.min() <= 0.0:
            raise KahlerViolation(f"度量密度在某处非正（min h = {h.min():.3e}）", {"min_h": float(h.min())})
        return h

    def volume(self) -> float:
        return float(np.sum(self.density())) * self.grid.cell_volume


class DeltaBandResult(NamedTuple):
    passed: bool
    min_h: float
    max_h: float


def delta_band_check(u0: KahlerPotential, delta: float) -> DeltaBandResult:
    """1 - δ < h < 1 + δ 在所有网格点上成立"""
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError(f"δ 必须在 (0,1) 内，收到 {delta}")
    h = u0.density()
    lo, hi = float(h.min()), float(h.max())
    return DeltaBandResult(bool(lo > 1.0 - delta and hi < 1.0 + delta), lo, hi)


def _gradient_squared(f: SpectralField) -> np.ndarray:
    total = np.zeros(f.grid.shape)
    for axis in range(f.grid.dim):
        order = [0] * f.grid.dim
        order[axis] = 1
        total += derivative(f, tuple(order)).samples ** 2
    return total


def scalar_curvature(p: KahlerPotential) -> SpectralField:
    """R_φ = -h^{-1} Δ log h"""
    h = p.require_kahler()
    log_h = SpectralField(p.grid, np.log(h))
    return SpectralField(p.grid, -laplacian(log_h).samples / h)


def average_curvature(p: KahlerPotential) -> float:
    """R̲ = ∫ R_φ dV_φ / ∫ dV_φ"""
    h = p.require_kahler()
    return float(np.sum(scalar_curvature(p).samples * h) / np.sum(h))


def nonlinearity(p: KahlerPotential, ricci: Optional[SpectralField] = None,
                 mean_curvature: float = 0.0) -> SpectralField:
    """
    R(φ) 的展开形式：

        -(h^{-2} - 1) Δ²φ + h^{-3} |∇Δφ|² + (h^{-1} Ric - R̲)

    平坦背景下第三组恒为零；给出 ricci 与 mean_curvature 时按背景场求值。

    参数:
        p: Kähler 势
        ricci: 背景 Ricci 场（仅求值）
        mean_curvature: 背景平均曲率 R̲

    返回:
        R(φ)
    """
    h = p.require_kahler()
    lap = laplacian(p.phi)
    bilap = laplacian(lap).samples
    fourth = -(h ** -2 - 1.0) * bilap
    third = _gradient_squared(lap) / h ** 3
    total = fourth + third
    if ricci is not None:
        if ricci.grid != p.grid:
            raise InvalidArgumentError("Ricci 场与势的网格不一致")
        total = total + ricci.samples / h - mean_curvature
    return SpectralField(p.grid, total)


def nonlinearity_direct(p: KahlerPotential) -> SpectralField:
    """R_φ - R̲ + Δ²φ，经由数量曲率计算"""
    bilap = laplacian(laplacian(p.phi))
    return scalar_curvature(p) - average_curvature(p) + bilap


def calabi_energy(p: KahlerPotential) -> float:
    """∫ (R_φ - R̲)² dV_φ"""
    h = p.require_kahler()
    r = scalar_curvature(p).samples - average_curvature(p)
    return float(np.sum(r ** 2 * h)) * p.grid.cell_volume


def c1_distance(p: SpectralField, q: SpectralField) -> float:
    """‖p - q‖_{C¹} = sup|p - q| + sup|∇(p - q)|"""
    diff = p - q
    return diff.sup_norm() + float(np.sqrt(_gradient_squared(diff)).max())


@dataclass(frozen=True)
class FlowConfig:
    T: float
    grid: Grid
    dt: float = 1e-3
    dt_policy: str = "graded"
    delta: float = 0.1
    alpha: float = DEFAULT_ALPHA
    solver: str = "semi-implicit"
    tolerance: float = 1e-6
    max_iterations: int = 30
    time_count: int = 16
    min_substeps: int = 4
    max_halvings: int = 8
    quadrature_nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgumentError(f"T 必须为正，收到 {self.T}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidArgumentError(f"δ 必须在 (0,1) 内，收到 {self.delta}")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt 必须为正，收到 {self.dt}")
        if self.dt_policy not in DT_POLICIES:
            raise InvalidArgumentError(f"未知的步长策略: {self.dt_policy}")
        if self.solver not in SOLVERS:
            raise InvalidArgumentError(f"未知的求解器: {self.solver}")

    def record_times(self) -> np.ndarray:
        return geometric_times(self.T, self.time_count)


@dataclass(frozen=True, eq=False)
class FlowState:
    """流的当前状态与历史；历史在记录时刻追加"""

    potential: KahlerPotential
    t: float
    initial: SpectralField
    config: Optional[FlowConfig] = None
    times: Tuple[float, ...] = ()
    energies: Tuple[float, ...] = ()
    c1_gaps: Tuple[float, ...] = ()
    min_h: Tuple[float, ...] = ()
    max_h: Tuple[float, ...] = ()
    snapshots: Tuple[SpectralField, ...] = ()
    rejected_steps: int = 0
    # 逐个接受步的能量统计，不只看记录时刻
    accepted_steps: int = 0
    energy_rises: int = 0
    max_energy_rise: float = 0.0
    step_energy: Optional[float] = None

    @classmethod
    def start(cls, u0: KahlerPotential, config: Optional[FlowConfig] = None) -> "FlowState":
        return cls(u0, 0.0, u0.phi, config)

    def energy(self) -> float:
        if self.step_energy is not None:
            return self.step_energy
        return calabi_energy(self.potential)

    def energy_monotone(self) -> bool:
        """每个接受步上能量都不增（相对容差 ENERGY_TOLERANCE）"""
        return self.energy_rises == 0

    def record(self) -> "FlowState":
        p = self.potential
        if self.times and self.t <= self.times[-1]:
            raise InvalidArgumentError("记录时刻必须严格递增")
        return replace(self,
                       times=self.times + (self.t,),
                       energies=self.energies + (calabi_energy(p),),
                       c1_gaps=self.c1_gaps + (c1_distance(p.phi, self.initial),),
                       min_h=self.min_h + (p.min_h(),),
                       max_h=self.max_h + (p.max_h(),),
                       snapshots=self.snapshots + (p.phi,))

    def trajectory(self) -> SpaceTimeField:
        return SpaceTimeField(np.asarray(self.times), self.snapshots)

    def csv_rows(self):
        for row in zip(self.times, self.energies, self.c1_gaps, self.min_h, self.max_h):
            yield row


def _euler(p: KahlerPotential, dt: float) -> KahlerPotential:
    grid = p.grid
    forcing = truncate(nonlinearity(p))
    advanced = p.phi + forcing * dt
    coeffs = advanced.coefficients * np.exp(-grid.k_squared() ** 2 * dt)
    coeffs = np.array(coeffs)
    coeffs.flat[0] = 0.0
    return KahlerPotential(SpectralField.from_coefficients(grid, coeffs), p.background)


def _accept(candidate: KahlerPotential) -> Optional[float]:
    """Kähler 条件成立且能量有限时返回候选步的能量，否则 None"""
    if not candidate.min_h() > 0.0:
        return None
    energy = calabi_energy(candidate)
    if not math.isfinite(energy):
        return None
    return energy


def _energy_rises(energies: Sequence[float]) -> Tuple[int, float]:
    """相邻能量的上升次数与最大相对上升量"""
    e = np.asarray(energies, dtype=float)
    if e.size < 2:
        return 0, 0.0
    step = np.diff(e)
    scale = np.abs(e[:-1])
    count = int(np.count_nonzero(step > ENERGY_TOLERANCE * scale + ENERGY_FLOOR))
    rise = step / np.maximum(scale, np.finfo(float).tiny)
    return count, float(max(0.0, rise.max()))


def semi_implicit_step(state: FlowState, dt: float, max_halvings: int = 8) -> FlowState:
    """
    积分因子 Euler 一步: φ̂ⁿ⁺¹ = e^{-dt|ξ|⁴}(φ̂ⁿ + dt·R̂(φⁿ))

    候选步若破坏 Kähler 条件（或能量不再有限），则拆成两个半步重试，
    最多减半 max_halvings 次。能量上升不触发重试，只计入 energy_rises。

    参数:
        state: 当前状态
        dt: 步长
        max_halvings: 最多减半次数

    返回:
        推进 dt 后的新状态
    """
    if not dt > 0:
        raise InvalidArgumentError(f"步长必须为正，收到 {dt}")
    rejected = 0
    energies = [state.energy()]

    def advance(p: KahlerPotential, h: float, depth: int) -> KahlerPotential:
        nonlocal rejected
        candidate = _euler(p, h)
        energy = _accept(candidate)
        if energy is not None:
            energies.append(energy)
            return candidate
        rejected += 1
        if depth >= max_halvings:
            raise StepRejected(f"步长减半 {max_halvings} 次后仍破坏 Kähler 条件 (t={state.t:.3e})",
                               {"t": state.t, "dt": dt, "min_h": candidate.min_h()})
        logger.debug(f"步长 {h:.3e} 破坏 Kähler 条件，减半重试")
        mid = advance(p, 0.5 * h, depth + 1)
        return advance(mid, 0.5 * h, depth + 1)

    potential = advance(state.potential, dt, 0)
    rises, max_rise = _energy_rises(energies)
    if rises:
        logger.debug(f"t={state.t:.3e} 处能量上升 {rises} 次，最大相对上升 {max_rise:.3e}")
    return replace(state, potential=potential, t=state.t + dt,
                   rejected_steps=state.rejected_steps + rejected,
                   accepted_steps=state.accepted_steps + len(energies) - 1,
                   energy_rises=state.energy_rises + rises,
                   max_energy_rise=max(state.max_energy_rise, max_rise),
                   step_energy=energies[-1])


def _substeps(t_from: float, t_to: float, config: FlowConfig) -> int:
    n = max(1, math.ceil((t_to - t_from) / config.dt - 1e-9))
    if config.dt_policy == "graded":
        n = max(n, config.min_substeps)
    return n


def run_flow(u0: KahlerPotential, config: FlowConfig, record_times: Optional[Sequence[float]] = None,
             dt: Optional[float] = None) -> FlowState:
    """
    半隐式积分到 T，并在记录时刻保存历史

    参数:
        u0: 初始势
        config: 流配置
        record_times: 记录时刻，默认为 config 的几何时间网格
        dt: 覆盖配置中的步长

    返回:
        终态 FlowState
    """
    if dt is not None:
        config = replace(config, dt=dt)
    u0.require_kahler()
    times = np.asarray(config.record_times() if record_times is None else record_times, dtype=float)
    state = FlowState.start(u0, config)
    for t_next in times:
        n = _substeps(state.t, float(t_next), config)
        h = (float(t_next) - state.t) / n
        for _ in range(n):
            state = semi_implicit_step(state, h, config.max_halvings)
        state = replace(state, t=float(t_next)).record()
    logger.info(f"Calabi 流积分到 T={config.T}: 接受步数 {state.accepted_steps}, 拒绝步数 {state.rejected_steps}, "
                f"能量上升 {state.energy_rises} 次, 终态能量 {state.energies[-1]:.6e}")
    if state.energy_rises:
        logger.warning(f"Calabi 能量在 {state.energy_rises} 个接受步上上升，最大相对上升 {state.max_energy_rise:.3e}")
    return state


def richardson_solution(u0: KahlerPotential, config: FlowConfig, levels: int = 2) -> SpectralField:
    """
    一阶格式的 Richardson 外推 2·φ(dt/2) - φ(dt)，作为跨求解器基准
    """
    coarse = run_flow(u0, config, [config.T]).potential.phi
    fine = coarse
    for level in range(1, levels):
        fine = run_flow(u0, config, [config.T], dt=config.dt / 2 ** level).potential.phi
    return fine * 2.0 - coarse


def convergence_order(u0: KahlerPotential, config: FlowConfig, t_end: float = 0.1) -> float:
    """以 dt, dt/2, dt/4 三次求解估计时间收敛阶"""
    sols = [run_flow(u0, config, [t_end], dt=config.dt / 2 ** i).potential.phi for i in range(3)]
    e1 = (sols[0] - sols[1]).sup_norm()
    e2 = (sols[1] - sols[2]).sup_norm()
    if e2 == 0.0:
        return float("inf")
    return float(np.log2(e1 / e2))


@dataclass(frozen=True)
class FixedPointRecord:
    iterate: int
    x_norm_delta: float
    contraction_factor: Optional[float]


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    psi: SpaceTimeField
    phi: SpaceTimeField
    state: FlowState
    records: Tuple[FixedPointRecord, ...]
    converged: bool

    def csv_rows(self):
        for r in self.records:
            yield r.iterate, r.x_norm_delta, r.contraction_factor

    def factors(self) -> List[float]:
        return [r.contraction_factor for r in self.records if r.contraction_factor is not None]


def _psi_source(psi: SpaceTimeField, u0: KahlerPotential, propagator: Propagator) -> Source:
    """s ↦ R(ψ(s) + S(s)u₀)；ψ 在 log t 上对 t^{-1/2}ψ 插值，S(s)u₀ 精确求值"""
    grid = psi.grid
    times = psi.times
    scaled = psi.samples() * (times ** -0.5).reshape((-1,) + (1,) * grid.dim)
    spline = interpolate.CubicSpline(np.log(times), scaled, axis=0) if len(psi) >= 2 else None
    lo, hi = float(np.log(times[0])), float(np.log(times[-1]))

    def evaluate(s: float) -> SpectralField:
        x = min(max(np.log(s), lo), hi)
        base = scaled[0] if spline is None else spline(x)
        current = SpectralField(grid, base * s ** 0.5) + propagator.apply(u0.phi, s)
        return nonlinearity(KahlerPotential(current))

    return Source(grid, evaluate, "calabi")


def duhamel_fixed_point(u0: KahlerPotential, config: FlowConfig, propagator: Optional[Propagator] = None,
                        jobs: int = 1) -> FixedPointResult:
    """
    不动点迭代 ψ_{k+1} = V[R(ψ_k + S u₀)]，ψ₀ = 0

    停止准则为相邻迭代之差的 X_T 范数小于容差；连续三次压缩因子 >= 1 报错。

    参数:
        u0: 初始势，须满足 δ 带条件
        config: 流配置
        propagator: 传播算子，默认平坦
        jobs: 线程数

    返回:
        FixedPointResult
    """
    band = delta_band_check(u0, config.delta)
    if not band.passed:
        raise DeltaBandViolation(
            f"初值不满足 δ 带条件: h ∈ [{band.min_h:.4f}, {band.max_h:.4f}]，δ = {config.delta}",
            {"min_h": band.min_h, "max_h": band.max_h, "delta": config.delta})
    propagator = propagator or Propagator.flat(u0.grid)
    times = config.record_times()
    linear = propagate_initial(u0.phi, times, propagator, jobs)
    psi = SpaceTimeField.zeros(u0.grid, times)
    records: List[FixedPointRecord] = []
    previous_delta = None
    streak = 0
    converged = False
    for k in range(1, config.max_iterations + 1):
        source = _psi_source(psi, u0, propagator)
        updated = volume_potential(source, propagator, config.T, times=times,
                                   nodes=config.quadrature_nodes, tolerance=None, jobs=jobs)
        delta = x_norm(updated - psi, config.alpha, config.T, jobs=jobs).total
        factor = delta / previous_delta if previous_delta else None
        records.append(FixedPointRecord(k, delta, factor))
        logger.debug(f"不动点第 {k} 次迭代: ‖Δψ‖_X = {delta:.3e}, 压缩因子 {factor}")
        psi = updated
        if delta < config.tolerance:
            converged = True
            break
        streak = streak + 1 if factor is not None and factor >= 1.0 else 0
        if streak >= NO_CONTRACTION_STREAK:
            raise NoContractionError(
                f"连续 {NO_CONTRACTION_STREAK} 次迭代不压缩，请减小 T 或 δ",
                {"T": config.T, "delta": config.delta, "x_norm_deltas": [r.x_norm_delta for r in records]})
        previous_delta = delta
    if not converged:
        logger.warning(f"不动点迭代 {config.max_iterations} 次后未达到容差 {config.tolerance}")
    phi = psi + linear
    state = FlowState.start(u0, config)
    for t, s in zip(times, phi.slices):
        state = replace(state, potential=KahlerPotential(s), t=float(t)).record()
    logger.info(f"不动点迭代结束: {len(records)} 次, 收敛 {converged}")
    return FixedPointResult(psi, phi, state, tuple(records), converged)


@dataclass(frozen=True)
class LatticePoint:
    delta: float
    T: float
    contracting: bool
    iterations: int
    max_factor: float

    def csv_row(self) -> Tuple[float, float, bool, int, float]:
        return self.delta, self.T, self.contracting, self.iterations, self.max_factor


def scale_to_band(u0: KahlerPotential, delta: float, band_fraction: float = 0.5) -> KahlerPotential:
    """把 u₀ 缩放到 ‖Δu₀‖∞ = band_fraction·δ"""
    size = float(np.max(np.abs(laplacian(u0.phi).samples)))
    if size == 0.0:
        raise InvalidArgumentError("初值的 Δu₀ 恒为零，无法按 δ 缩放")
    return KahlerPotential(u0.phi * (band_fraction * delta / size), u0.background)


def contraction_lattice(u0: KahlerPotential, config: FlowConfig, deltas: Sequence[float],
                        horizons: Sequence[float], band_fraction: float = 0.5,
                        propagator: Optional[Propagator] = None, jobs: int = 1) -> List[LatticePoint]:
    """
    在 (δ, T) 格点上运行不动点迭代，记录是否压缩及最大压缩因子

    每个 δ 下把 u₀ 缩放到 ‖Δu₀‖∞ = band_fraction·δ 再迭代。

    参数:
        u0: 初始势，只取其形状
        config: 流配置，T 与 δ 在格点上替换
        deltas: δ 列表
        horizons: T 列表
        band_fraction: 初值占带宽的比例，须在 (0, 1]
        propagator: 传播算子，默认平坦
        jobs: 线程数

    返回:
        按 (δ, T) 升序排列的格点结果
    """
    if not 0.0 < band_fraction <= 1.0:
        raise InvalidArgumentError(f"band_fraction 必须在 (0, 1] 内，收到 {band_fraction}")
    propagator = propagator or Propagator.flat(u0.grid)
    points = []
    for delta in sorted(deltas):
        scaled = scale_to_band(u0, delta, band_fraction)
        for T in sorted(horizons):
            try:
                result = duhamel_fixed_point(scaled, replace(config, T=T, delta=delta), propagator, jobs)
                factors = result.factors()
                contracting = result.converged and all(f < 1.0 for f in factors)
                points.append(LatticePoint(delta, T, contracting, len(result.records), max(factors, default=0.0)))
            except NoContractionError as e:
                logger.info(f"(δ={delta}, T={T}) 处迭代不压缩")
                points.append(LatticePoint(delta, T, False, len(e.diagnostics.get("x_norm_deltas", [])),
                                           float("inf")))
    return points


def delta_monotone(points: Sequence[LatticePoint], slack: float = 1e-9) -> bool:
    """
    δ 越小越容易压缩：同一 T 下 (δ, T) 压缩则所有 δ' <= δ 也压缩，且最大压缩因子不增

    参数:
        points: contraction_lattice 的结果
        slack: 因子比较的相对容差

    返回:
        格点上是否处处满足单调性
    """
    by_T: Dict[float, List[LatticePoint]] = {}
    for point in points:
        by_T.setdefault(point.T, []).append(point)
    for row in by_T.values():
        row = sorted(row, key=lambda q: q.delta)
        for smaller, larger in zip(row, row[1:]):
            if larger.contracting and not smaller.contracting:
                return False
            if larger.contracting and smaller.max_factor > larger.max_factor * (1.0 + slack):
                return False
    return True


def run_smoothing_experiment(u0: KahlerPotential, config: FlowConfig, k_max: int = 3,
                             l_max: int = 1) -> Tuple[SmoothingProfile, FlowState]:
    """
    在几何时间网格上运行流，给出加权光滑化剖面与 C¹ 收敛间隙

    返回:
        (SmoothingProfile, FlowState)
    """
    band = delta_band_check(u0, config.delta)
    if not band.passed:
        raise DeltaBandViolation(
            f"初值不满足 δ 带条件: h ∈ [{band.min_h:.4f}, {band.max_h:.4f}]，δ = {config.delta}",
            {"min_h": band.min_h, "max_h": band.max_h, "delta": config.delta})
    if config.solver == "duhamel-fixed-point":
        state = duhamel_fixed_point(u0, config).state
    else:
        state = run_flow(u0, config)
    profile = smoothing_profile(state.trajectory(), k_max, l_max)
    return profile, state
