#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
norms.py

加权抛物 Hölder 范数 ‖·‖_{Y_T}、‖·‖_{X_T}、插值范数 ‖·‖′_{X_T}
的离散估计，以及逐时刻的加权光滑化剖面。

所有估计都是连续范数的下界：空间上只取网格点对，时间上只取几何网格
上相距不超过 PAIR_WINDOW 步的时间对。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError
from .kernel import MetricSpec
from .spectral import (SpaceTimeField, SpectralField, laplacian, pointwise_norm,
                       tensor_components, tensor_holder_seminorm)

logger = logging.getLogger("norms")

DEFAULT_ALPHA = 0.5
# 时间 Hölder 商只取 j' - j <= PAIR_WINDOW 的时间对
PAIR_WINDOW = 3
PAIR_POLICY = f"adjacent-and-skip (j'-j <= {PAIR_WINDOW})"


@dataclass(frozen=True)
class NormReport:
    """范数分项报告，total 恒等于各项之和"""

    kind: str
    total: float
    terms: Dict[str, float]
    alpha: float
    T: float
    time_grid: Tuple[float, ...]
    grid: dict
    pair_policy: str = PAIR_POLICY
    extras: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        payload = dict(self.terms)
        payload.update({
            "kind": self.kind,
            "total": self.total,
            "alpha": self.alpha,
            "T": self.T,
            "grid": self.grid,
            "time_grid": list(self.time_grid),
            "pair_policy": self.pair_policy,
        })
        payload.update(self.extras)
        return payload


@dataclass(frozen=True)
class SmoothingRow:
    t: float
    k: int
    l: int
    weighted_value: float
    raw_value: float


@dataclass(frozen=True)
class SmoothingProfile:
    rows: Tuple[SmoothingRow, ...]
    # (k, l) -> log-log 斜率；全零序列为 None
    slopes: Dict[Tuple[int, int], Optional[float]]

    def csv_rows(self):
        for r in self.rows:
            yield r.t, r.k, r.l, r.weighted_value, r.raw_value

    def values(self, k: int, l: int) -> np.ndarray:
        return np.array([r.weighted_value for r in self.rows if r.k == k and r.l == l])


def _check_trajectory(u: SpaceTimeField, T: Optional[float]) -> float:
    if len(u) < 2:
        raise InsufficientDataError(f"至少需要 2 个时间切片，收到 {len(u)}")
    if len(u) < 4:
        logger.warning(f"只有 {len(u)} 个时间切片，时间 Hölder 项可能严重低估")
    if T is None:
        return float(u.times[-1])
    if u.times[-1] > T * (1 + 1e-12):
        raise InvalidArgumentError(f"切片时间 {u.times[-1]} 超出 (0, T={T}]")
    return float(T)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"Hölder 指数必须在 (0,1) 内，收到 {alpha}")


def covariant_components(f: SpectralField, k: int, metric: Optional[MetricSpec] = None) -> List[np.ndarray]:
    """∇^k f 的加权分量；1 维共形度量下为弧长导数"""
    if metric is None or metric.is_flat:
        return tensor_components(f, k)
    return [metric.arclength_derivative(f, k).samples]


def time_derivative(u: SpaceTimeField) -> SpaceTimeField:
    """
    非均匀三点差分估计 ∂_t u

    内部点用中心型三点公式，两端用单侧三点公式；只有两个切片时退化为两点差分。
    """
    t = u.times
    data = u.samples()
    n = len(u)
    out = np.empty_like(data)
    if n == 2:
        slope = (data[1] - data[0]) / (t[1] - t[0])
        out[0] = out[1] = slope
        return SpaceTimeField.from_samples(u.grid, t, out)
    for j in range(n):
        if j == 0:
            i0, i1, i2 = 0, 1, 2
        elif j == n - 1:
            i0, i1, i2 = n - 3, n - 2, n - 1
        else:
            i0, i1, i2 = j - 1, j, j + 1
        x0, x1, x2 = t[i0], t[i1], t[i2]
        x = t[j]
        # 拉格朗日插值多项式在 x 处的导数
        c0 = (2 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        c1 = (2 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        c2 = (2 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
        out[j] = c0 * data[i0] + c1 * data[i1] + c2 * data[i2]
    return SpaceTimeField.from_samples(u.grid, t, out)


def _time_holder(stacks: Sequence[np.ndarray], times: np.ndarray, alpha: float,
                 weight_power: float) -> float:
    """sup t^{p} |v(t+h) - v(t)| / h^{α/4}，v 为张量分量的堆叠"""
    best = 0.0
    n = times.size
    for j in range(n):
        for d in range(1, PAIR_WINDOW + 1):
            jj = j + d
            if jj >= n:
                break
            diff = np.sqrt(sum((s[jj] - s[j]) ** 2 for s in stacks)).max()
            h = times[jj] - times[j]
            best = max(best, float(times[j] ** weight_power * diff / h ** (alpha / 4.0)))
    return best


def _weighted_sup(values: Sequence[float], times: np.ndarray, power: float) -> float:
    return float(np.max(times ** power * np.asarray(values)))


def _map_slices(func: Callable, slices, jobs: int) -> list:
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(func, slices))


def y_norm(f: SpaceTimeField, alpha: float = DEFAULT_ALPHA, T: Optional[float] = None,
           jobs: int = 1) -> NormReport:
    """
    ‖f‖_{Y_T} 的分项估计

    参数:
        f: 时空场
        alpha: Hölder 指数
        T: 时间上界，默认取最后一个切片时间
        jobs: 线程数

    返回:
        NormReport，三项: sup_c0, sup_holder, time_holder
    """
    _check_alpha(alpha)
    T = _check_trajectory(f, T)
    times = f.times
    sups = _map_slices(lambda s: s.sup_norm(), f.slices, jobs)
    holders = _map_slices(lambda s: tensor_holder_seminorm([s.samples], s.grid, alpha), f.slices, jobs)
    terms = {
        "sup_c0": _weighted_sup(sups, times, 0.5),
        "sup_holder": _weighted_sup(holders, times, 0.5 + alpha / 4.0),
        "time_holder": _time_holder([f.samples()], times, alpha, 0.5 + alpha / 4.0),
    }
    total = float(sum(terms.values()))
    logger.debug(f"Y_T 范数 = {total:.6e} ({', '.join(f'{k}={v:.3e}' for k, v in terms.items())})")
    return NormReport("Y", total, terms, alpha, T, tuple(times.tolist()), f.grid.describe())


def _x_terms(u: SpaceTimeField, alpha: float, metric: Optional[MetricSpec], jobs: int,
             extended: bool) -> Dict[str, float]:
    times = u.times
    grid = u.grid

    def per_slice(s: SpectralField):
        comps = [covariant_components(s, k, metric) for k in range(5)]
        return comps, [float(pointwise_norm(c).max()) for c in comps]

    results = _map_slices(per_slice, u.slices, jobs)
    terms: Dict[str, float] = {}
    for k in range(5):
        terms[f"c0_k{k}"] = _weighted_sup([r[1][k] for r in results], times, -0.5 + k / 4.0)
    p = 0.5 + alpha / 4.0
    fourth = [r[0][4] for r in results]
    terms["holder_nabla4"] = _weighted_sup(
        [tensor_holder_seminorm(c, grid, alpha) for c in fourth], times, p)
    dt = time_derivative(u)
    terms["c0_dt"] = _weighted_sup([s.sup_norm() for s in dt.slices], times, 0.5)
    terms["holder_dt"] = _weighted_sup(
        _map_slices(lambda s: tensor_holder_seminorm([s.samples], grid, alpha), dt.slices, jobs), times, p)
    stacks4 = [np.stack([c[a] for c in fourth]) for a in range(len(fourth[0]))]
    terms["time_holder_nabla4"] = _time_holder(stacks4, times, alpha, p)
    terms["time_holder_dt"] = _time_holder([dt.samples()], times, alpha, p)
    if extended:
        for k in range(4):
            comps = [r[0][k] for r in results]
            stacks = [np.stack([c[a] for c in comps]) for a in range(len(comps[0]))]
            terms[f"time_holder_nabla{k}"] = _time_holder(stacks, times, alpha, -0.5 + k / 4.0 + alpha / 4.0)
    return terms


def x_norm(u: SpaceTimeField, alpha: float = DEFAULT_ALPHA, T: Optional[float] = None,
           metric: Optional[MetricSpec] = None, jobs: int = 1) -> NormReport:
    """
    ‖u‖_{X_T} 的十一项估计

    空间导数用谱方法（共形度量下为弧长导数），∂_t u 用非均匀三点差分。

    参数:
        u: 时空场
        alpha: Hölder 指数
        T: 时间上界
        metric: 度量，默认平坦
        jobs: 线程数

    返回:
        NormReport
    """
    _check_alpha(alpha)
    T = _check_trajectory(u, T)
    terms = _x_terms(u, alpha, metric, jobs, extended=False)
    total = float(sum(terms.values()))
    logger.debug(f"X_T 范数 = {total:.6e}")
    return NormReport("X", total, terms, alpha, T, tuple(u.times.tolist()), u.grid.describe())


def x_norm_extended(u: SpaceTimeField, alpha: float = DEFAULT_ALPHA, T: Optional[float] = None,
                    metric: Optional[MetricSpec] = None, jobs: int = 1) -> NormReport:
    """
    插值范数 ‖u‖′_{X_T} = ‖u‖_{X_T} + Σ_{k<=3} 低阶时间 Hölder 项

    extras 中的 interpolation_constant 为低阶项与 X_T 总和之比的最大值。
    """
    _check_alpha(alpha)
    T = _check_trajectory(u, T)
    terms = _x_terms(u, alpha, metric, jobs, extended=True)
    lower = [terms[f"time_holder_nabla{k}"] for k in range(4)]
    base_total = float(sum(v for key, v in terms.items() if key not in {f"time_holder_nabla{k}" for k in range(4)}))
    constant = max(lower) / base_total if base_total > 0 else 0.0
    total = float(sum(terms.values()))
    return NormReport("X'", total, terms, alpha, T, tuple(u.times.tolist()), u.grid.describe(),
                      extras={"x_total": base_total, "interpolation_constant": constant})


def _loglog_slope(times: np.ndarray, raw: np.ndarray) -> Optional[float]:
    keep = raw > 1e-300
    if np.count_nonzero(keep) < 2:
        return None
    slope, _ = np.polyfit(np.log(times[keep]), np.log(raw[keep]), 1)
    return float(slope)


def smoothing_profile(u: SpaceTimeField, k_max: int = 3, l_max: int = 1,
                      metric: Optional[MetricSpec] = None) -> SmoothingProfile:
    """
    加权量 t^{l+k/4}·‖∂_t^l ∇^k ∂∂̄ u(t)‖₀ 及未加权量的 log-log 斜率

    参数:
        u: 轨迹
        k_max: 最高空间导数阶
        l_max: 最高时间导数阶
        metric: 度量，默认平坦

    返回:
        SmoothingProfile
    """
    if k_max < 0 or l_max < 0:
        raise InvalidArgumentError("导数阶数不能为负")
    if u.times[-1] / u.times[0] < 10.0:
        logger.warning(f"轨迹只覆盖 t ∈ [{u.times[0]:.3e}, {u.times[-1]:.3e}]，不足一个数量级")
    current = u.map(laplacian)
    by_l = [current]
    for _ in range(l_max):
        current = time_derivative(current)
        by_l.append(current)
    rows: List[SmoothingRow] = []
    slopes: Dict[Tuple[int, int], Optional[float]] = {}
    for l, field_l in enumerate(by_l):
        for k in range(k_max + 1):
            raw = np.array([float(pointwise_norm(covariant_components(s, k, metric)).max())
                            for s in field_l.slices])
            weighted = u.times ** (l + k / 4.0) * raw
            rows.extend(SmoothingRow(float(t), k, l, float(w), float(r))
                        for t, w, r in zip(u.times, weighted, raw))
            slopes[(k, l)] = _loglog_slope(u.times, raw)
    rows.sort(key=lambda r: (r.t, r.k, r.l))
    return SmoothingProfile(tuple(rows), slopes)
