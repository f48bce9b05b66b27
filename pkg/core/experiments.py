#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
experiments.py

实验目录：每个实验 id 对应一个参数表和一个运行函数，运行函数组合
spectral / kernel / norms / parametrix / duhamel / calabi 模块的操作，
返回要写出的表格、验收判定和摘要数值。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .calabi import (FlowConfig, KahlerPotential, c1_distance, contraction_lattice, delta_band_check,
                     delta_monotone, duhamel_fixed_point, richardson_solution, run_flow, run_smoothing_experiment)
from .config_parser import ExperimentConfig, Parameter
from .duhamel import (Propagator, Source, propagate_initial, schauder_ratio, separable_response,
                      volume_potential)
from .errors import DeltaBandViolation, InsufficientDataError, InvalidArgumentError, NoContractionError
from .generators import DATA_CLASSES, InitialDataGenerator
from .kernel import (KernelProfile, MetricSpec, ReferenceOperator, decay_fit, euclidean_kernel_profile,
                     euclidean_mass, flat_torus_kernel, reference_kernel, rescaling_convergence, resolved_window_start)
from .norms import smoothing_profile, x_norm_extended
from .parametrix import assemble_kernel, build_parametrix, defect, frozen_residual, neumann_series
from .spectral import Grid, SpaceTimeField, SpectralField, geometric_times

logger = logging.getLogger("experiments")

# 各输出表的表头
KERNEL_TABLE_HEADER = ("x_index", "y_index", "t", "value")
PROFILE_HEADER = ("radius", "value")
SMOOTHING_HEADER = ("t", "k", "l", "weighted_value", "raw_value")
NEUMANN_HEADER = ("m", "sup_norm", "fit_exponent")
VALIDATION_HEADER = ("t", "row_l1_error", "mass_error", "pde_residual")
TRAJECTORY_HEADER = ("t", "x_index", "value")
RATIO_HEADER = ("epsilon", "T", "alpha", "x_norm", "y_norm", "ratio")
FLOW_HEADER = ("t", "calabi_energy", "c1_gap", "min_h", "max_h")
FIXED_POINT_HEADER = ("iterate", "x_norm_delta", "contraction_factor")
LATTICE_HEADER = ("delta", "T", "contracting", "iterations", "max_factor")


@dataclass(frozen=True)
class Table:
    name: str
    header: Tuple[str, ...]
    rows: List[Sequence[Any]]


@dataclass
class ExperimentResult:
    """一次实验的全部产物"""

    tables: List[Table] = field(default_factory=list)
    acceptance: Dict[str, bool] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    def add(self, name: str, header: Sequence[str], rows) -> None:
        self.tables.append(Table(name, tuple(header), list(rows)))


@dataclass(frozen=True)
class Experiment:
    id: str
    description: str
    schema: Mapping[str, Parameter]
    run: Callable[[ExperimentConfig], ExperimentResult]


def _is_power_of_two(v: int) -> bool:
    return v >= 16 and v & (v - 1) == 0


def _points(default: int, limit: int = 1024) -> Parameter:
    return Parameter(int, default, lambda v: _is_power_of_two(v) and v <= limit,
                     f"16 到 {limit} 之间的 2 的幂", "每轴网格点数")


def _positive(default: float, description: str) -> Parameter:
    return Parameter(float, default, lambda v: v > 0, "> 0", description)


def _count(default: int, description: str, minimum: int = 1) -> Parameter:
    return Parameter(int, default, lambda v: v >= minimum, f">= {minimum}", description)


def _epsilon(default: float) -> Parameter:
    return Parameter(float, default, lambda v: 0.0 <= v < 0.5, "0 <= ε < 0.5", "度量扰动幅度 ε")


def _unit(default: float, description: str) -> Parameter:
    return Parameter(float, default, lambda v: 0.0 < v < 1.0, "0 < 值 < 1", description)


def _choice(default: str, options: Sequence[str], description: str) -> Parameter:
    return Parameter(str, default, lambda v: v in options, f"取值 {', '.join(options)}", description)


def _positive_list(default: List[float], description: str) -> Parameter:
    return Parameter(list, default, lambda v: len(v) > 0 and all(x > 0 for x in v), "非空正数列表", description)


DIM = Parameter(int, 1, lambda v: v in (1, 2), "1 或 2", "空间维数")
DIM_1D = Parameter(int, 1, lambda v: v == 1, "只支持 1", "空间维数")
DATA_PARAMS = {
    "data": _choice("sawtooth", DATA_CLASSES, "初始数据类别"),
    "amplitude": _positive(0.05, "‖Δu₀‖∞ 的目标值"),
    "data_file": Parameter(str, "initial_data_func.py", None, "", "data = file 时的生成函数文件"),
}


def _grid(p: Mapping[str, Any]) -> Grid:
    return Grid(p["dim"], p["points"])


def _initial_potential(grid: Grid, p: Mapping[str, Any], seed: int, kind: Optional[str] = None) -> KahlerPotential:
    generator = InitialDataGenerator(grid, seed)
    field_ = generator.generate(kind or p["data"], p["amplitude"], generator_file=p["data_file"])
    return KahlerPotential(field_)


def _require_band(u0: KahlerPotential, delta: float) -> None:
    band = delta_band_check(u0, delta)
    if not band.passed:
        raise DeltaBandViolation(
            f"初值不满足 δ 带条件: h ∈ [{band.min_h:.4f}, {band.max_h:.4f}]，δ = {delta}",
            {"min_h": band.min_h, "max_h": band.max_h, "delta": delta})


def _trajectory_rows(u: SpaceTimeField, stride: int) -> Iterator[Tuple[float, int, float]]:
    for t, s in zip(u.times, u.slices):
        flat = s.samples.ravel()
        for i in range(0, flat.size, stride):
            yield float(t), i, float(flat[i])


# kernel-mass

def run_kernel_mass(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = _grid(p)
    start = resolved_window_start(grid)
    times = [t for t in geometric_times(p["T"], p["count"]) if t >= start]
    if not times:
        raise InsufficientDataError(f"所有时间都低于分辨率下限 {start:.3e}")

    tables = []
    if p["construction"] in ("flat", "both"):
        tables.append(("flat", flat_torus_kernel(grid, times, config.jobs)))
    if p["construction"] in ("reference", "both"):
        if grid.dim == 1:
            metric = MetricSpec.conformal(grid, p["epsilon"])
            tables.append(("reference", reference_kernel(metric, grid, times, config.jobs)))
        elif p["construction"] == "both":
            logger.warning("参考核只支持 1 维，跳过")
        else:
            raise InvalidArgumentError("参考核只支持 1 维")

    orders = []
    for k in range(1, p["max_order"] + 1):
        orders.append(k if grid.dim == 1 else (k, 0))
        if grid.dim == 2:
            orders.append((0, k))

    rows = []
    worst_mass = worst_derivative = 0.0
    for name, table in tables:
        for j, t in enumerate(table.times):
            mass_error = float(np.max(np.abs(table.masses(j) - 1.0)))
            derivative = max(float(np.max(np.abs(table.derivative_integrals(j, o)))) for o in orders)
            worst_mass = max(worst_mass, mass_error)
            worst_derivative = max(worst_derivative, derivative)
            rows.append((name, float(t), mass_error, derivative))
        logger.info(f"{name} 核: 最大质量误差 {worst_mass:.3e}, 最大导数积分 {worst_derivative:.3e}")

    result = ExperimentResult()
    result.add("mass.csv", ("construction", "t", "max_mass_error", "max_derivative_integral"), rows)
    result.add("kernel_table.csv", KERNEL_TABLE_HEADER, tables[0][1].csv_rows(p["stride"]))
    result.acceptance = {"mass_error": worst_mass <= 1e-9, "derivative_integrals": worst_derivative <= 1e-8}
    result.summary = {"max_mass_error": worst_mass, "max_derivative_integral": worst_derivative,
                      "times": len(times)}
    return result


# kernel-decay

def run_kernel_decay(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    dim = p["dim"]
    radii = np.arange(0.0, p["r_max"] + 0.5 * p["spacing"], p["spacing"])
    window = (p["window_start"], None)
    result = ExperimentResult()
    fits = []
    for k in (int(v) for v in p["k_values"]):
        profile = euclidean_kernel_profile(dim, k, p["t"], radii)
        result.add(f"profile_k{k}.csv", PROFILE_HEADER, profile.csv_rows())
        fit = decay_fit(profile, window)
        fits.append(("biharmonic", k, fit))
        logger.info(f"D^{k} 核包络指数 {fit.exponent:.4f}，使用 {fit.points_used} 个点")

    # 热核对照，指数应为 2
    t = p["t"]
    heat = (4.0 * np.pi * t) ** (-dim / 2.0) * np.exp(-radii ** 2 / (4.0 * t))
    control = decay_fit(KernelProfile(dim, 0, t, radii, heat), window)
    fits.append(("gaussian", 0, control))
    result.add("decay_fit.csv", ("kernel", "k", "C", "delta", "exponent", "prefactor_power", "points_used"),
               [(name, k, *fit) for name, k, fit in fits])

    rho = np.linspace(0.0, p["scaling_radius"], 33)
    scaling_rows = []
    for k in (int(v) for v in p["k_values"]):
        base = euclidean_kernel_profile(dim, k, 1.0, rho).values
        for s in p["scaling_times"]:
            values = euclidean_kernel_profile(dim, k, s, s ** 0.25 * rho).values
            expected = s ** (-(dim + k) / 4.0) * base
            error = float(np.max(np.abs(values - expected)) / np.max(np.abs(expected)))
            scaling_rows.append((k, s, error))
    result.add("scaling.csv", ("k", "t", "relative_error"), scaling_rows)

    exponents = [fit.exponent for name, _, fit in fits if name == "biharmonic"]
    scaling_error = max(r[2] for r in scaling_rows)
    result.acceptance = {
        "decay_exponent": all(abs(e - 4.0 / 3.0) <= 0.05 for e in exponents),
        "gaussian_control": abs(control.exponent - 2.0) <= 0.05,
        "scaling_identity": scaling_error <= 1e-10,
    }
    # 半径 r_max 以内的质量，反映剖面截断
    mass = euclidean_mass(dim, p["t"], p["r_max"])
    result.summary = {"exponents": exponents, "gaussian_exponent": control.exponent,
                      "max_scaling_error": scaling_error, "mass_within_r_max": mass}
    return result


# nu-limit

def run_nu_limit(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = Grid(1, p["points"])
    t_sequence = p["t_max"] * 2.0 ** -np.arange(p["halvings"] + 1)
    rows = []
    final_gaps: Dict[str, List[float]] = {"flat": [], "perturbed": []}
    spans = []
    for label, metric in (("flat", MetricSpec.flat(grid)), ("perturbed", MetricSpec.conformal(grid, p["epsilon"]))):
        operator = ReferenceOperator(metric)
        for k in (int(v) for v in p["k_values"]):
            table = rescaling_convergence(metric, k, t_sequence, p["reference_points"], operator=operator)
            if not table.rows:
                raise InsufficientDataError(f"k={k} 的时间序列全部低于分辨率下限")
            rows.extend((label, k, r.t, r.minimum, r.maximum, r.gap, table.nu) for r in table.rows)
            final_gaps[label].append(table.final_gap)
            spans.append(np.log10(table.rows[0].t / table.rows[-1].t))
            logger.info(f"{label} k={k}: ν={table.nu:.10f}, 最终相对偏差 {table.final_gap:.3e}")

    result = ExperimentResult()
    result.add("convergence.csv", ("metric", "k", "t", "minimum", "maximum", "gap", "nu"), rows)
    result.acceptance = {
        "perturbed_final_gap": all(g < 0.02 for g in final_gaps["perturbed"]),
        "flat_exact": all(g <= 1e-6 for g in final_gaps["flat"]),
        "span_decades": min(spans) >= 2.0,
    }
    result.summary = {"final_gaps": final_gaps, "span_decades": min(spans)}
    return result


# smoothing-rates

def run_smoothing_rates(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = _grid(p)
    times = geometric_times(p["T"], p["count"])
    u0 = _initial_potential(grid, p, config.seed)
    _require_band(u0, p["delta"])
    scale = p["amplitude"]

    result = ExperimentResult()
    slopes_rows = []
    linear = smoothing_profile(propagate_initial(u0.phi, times, jobs=config.jobs))
    result.add("smoothing_linear.csv", SMOOTHING_HEADER, linear.csv_rows())
    profiles = {"linear": linear}

    if p["flow"]:
        flow_config = FlowConfig(p["T"], grid, dt=p["dt"], delta=p["delta"], time_count=p["count"])
        flow_profile, state = run_smoothing_experiment(u0, flow_config)
        result.add("smoothing_flow.csv", SMOOTHING_HEADER, flow_profile.csv_rows())
        result.add("trajectory.csv", TRAJECTORY_HEADER, _trajectory_rows(state.trajectory(), p["stride"]))
        profiles["flow"] = flow_profile
        c1_scale = c1_distance(u0.phi, SpectralField.constant(grid))
        c1_ratio = state.c1_gaps[0] / c1_scale
        result.acceptance["c1_gap"] = c1_ratio < 0.05
        result.summary["c1_gap_ratio"] = c1_ratio

    control_u0 = _initial_potential(grid, p, config.seed, kind=p["control"])
    control = smoothing_profile(propagate_initial(control_u0.phi, times, jobs=config.jobs))
    result.add("smoothing_control.csv", SMOOTHING_HEADER, control.csv_rows())

    for source, profile in list(profiles.items()) + [("control", control)]:
        for (k, l), slope in sorted(profile.slopes.items()):
            slopes_rows.append((source, k, l, slope))
    result.add("slopes.csv", ("source", "k", "l", "slope"), slopes_rows)

    for source, profile in profiles.items():
        ok = True
        for k in (1, 2, 3):
            slope = profile.slopes.get((k, 0))
            ok = ok and slope is not None and abs(slope + k / 4.0) <= 0.1
        result.acceptance[f"{source}_slopes"] = ok

    decay = [float(control.values(k, 0)[0]) / scale for k in (1, 2, 3)]
    result.acceptance["control_decay"] = max(decay) < 0.1
    result.summary.update({
        "slopes": {s: {str(k): prof.slopes.get((k, 0)) for k in (1, 2, 3)} for s, prof in profiles.items()},
        "control_weighted_over_initial": decay,
    })
    return result


# schauder-ratio

def run_schauder_ratio(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = Grid(1, p["points"])
    source = Source.from_function(grid, lambda s, x: s ** -0.5 * np.cos(x) + np.sin(2.0 * x))
    records = []
    for eps in p["epsilons"] if p["epsilons"] else [0.0]:
        metric = MetricSpec.flat(grid) if eps == 0.0 else MetricSpec.conformal(grid, eps)
        propagator = Propagator.from_metric(metric)
        for T in p["T_values"]:
            records.append(schauder_ratio(metric, source, T, p["alpha"], p["count"], propagator,
                                          p["nodes"], config.jobs))

    T_max = max(p["T_values"])
    times = geometric_times(T_max, p["count"])
    v = volume_potential(source, Propagator.flat(grid), T_max, times=times, nodes=p["nodes"], jobs=config.jobs)
    extended = x_norm_extended(v, p["alpha"], T_max, jobs=config.jobs)

    ratios = [r.ratio for r in records]
    result = ExperimentResult()
    result.add("ratio.csv", RATIO_HEADER, [r.csv_row() for r in records])
    result.acceptance = {"ratio_uniformity": max(ratios) / min(ratios) < 2.0}
    result.summary = {
        "ratio_spread": max(ratios) / min(ratios),
        "x_norm_terms": dict(records[0].x_report.terms),
        "y_norm_terms": dict(records[0].y_report.terms),
        "interpolation_constant": extended.extras["interpolation_constant"],
    }
    return result


# parametrix-validate / neumann-decay

def _parametrix_pipeline(p: Mapping[str, Any], jobs: int):
    grid = Grid(1, p["points"])
    metric = MetricSpec.conformal(grid, p["epsilon"])
    times = geometric_times(p["T"], p["count"])
    Z = build_parametrix(metric, grid, times, p["n_charts"], jobs)
    K = defect(Z, jobs=jobs)
    psi = neumann_series(K, p["tolerance"], p["nodes"], jobs=jobs)
    return grid, Z, K, psi


def _defect_rows(K) -> Iterator[Tuple[float, float, float, float]]:
    sups = K.group_sup_norms()
    for j, t in enumerate(K.times):
        yield float(t), float(sups["frozen"][j]), float(sups["lower_order"][j]), float(sups["cutoff"][j])


def run_parametrix_validate(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid, Z, K, psi = _parametrix_pipeline(p, config.jobs)
    assembled = assemble_kernel(Z, psi, nodes=p["nodes"], jobs=config.jobs)
    slope = K.sampled().singularity_exponent()

    result = ExperimentResult()
    result.add("validation.csv", VALIDATION_HEADER, assembled.csv_rows())
    result.add("neumann.csv", NEUMANN_HEADER, psi.csv_rows())
    result.add("defect_groups.csv", ("t", "frozen", "lower_order", "cutoff"), _defect_rows(K))
    result.add("kernel_table.csv", KERNEL_TABLE_HEADER, assembled.table.csv_rows(p["stride"]))
    rows = assembled.validation
    result.acceptance = {
        "row_l1_error": bool(rows) and all(r.row_l1_error <= 1e-3 for r in rows),
        "pde_residual": bool(rows) and all(r.pde_residual <= 1e-4 for r in rows),
        "defect_order": abs(slope + 1.0) <= 0.1,
    }
    frozen = frozen_residual(Z.family, p["T"], column=grid.points_per_axis // 2)
    logger.info(f"冻结核方程残差 {frozen:.3e} (t={p['T']})")
    result.summary = {"defect_slope": slope, "neumann_terms": psi.terms, "asymmetry": assembled.asymmetry,
                      "validated_times": len(rows), "frozen_residual": frozen}
    return result


def super_geometric_start(ratios: Sequence[float]) -> Optional[int]:
    """
    比值序列从第几项起严格递减；返回项号 m₀（从 1 计），不存在时为 None

    ratios[i] 是第 i+2 项与第 i+1 项之比。
    """
    if len(ratios) < 2:
        return 1 if ratios else None
    start = len(ratios) - 1
    while start > 0 and ratios[start] < ratios[start - 1]:
        start -= 1
    if start == len(ratios) - 1:
        return None
    return start + 1


def run_neumann_decay(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid, Z, K, psi = _parametrix_pipeline(p, config.jobs)
    ratios = psi.ratios()
    m0 = super_geometric_start(ratios)

    result = ExperimentResult()
    result.add("neumann.csv", NEUMANN_HEADER, psi.csv_rows())
    result.add("defect_groups.csv", ("t", "frozen", "lower_order", "cutoff"), _defect_rows(K))
    result.acceptance = {
        "super_geometric": m0 is not None and m0 <= 8,
        "integral_equation_residual": psi.residual_ok,
    }
    result.summary = {"terms": psi.terms, "ratios": ratios, "m0": m0, "residual": psi.residual}
    return result


# flow-run

def run_flow_experiment(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = _grid(p)
    u0 = _initial_potential(grid, p, config.seed)
    _require_band(u0, p["delta"])
    flow_config = FlowConfig(p["T"], grid, dt=p["dt"], delta=p["delta"], time_count=p["count"])
    state = run_flow(u0, flow_config)

    result = ExperimentResult()
    result.add("flow.csv", FLOW_HEADER, state.csv_rows())
    result.add("trajectory.csv", TRAJECTORY_HEADER, _trajectory_rows(state.trajectory(), p["stride"]))

    # 随机可容许初值上的能量单调性
    sample_rows = []
    sample_rises = []
    generator = InitialDataGenerator(grid, config.seed)
    for i, field_ in enumerate(generator.batch("c11", p["samples"], p["amplitude"])):
        sample = run_flow(KahlerPotential(field_), flow_config)
        sample_rises.append(sample.energy_rises)
        sample_rows.extend((i, t, e) for t, e in zip(sample.times, sample.energies))
    result.add("energy_samples.csv", ("sample", "t", "calabi_energy"), sample_rows)

    result.acceptance = {
        "energy_monotone": state.energy_monotone() and not any(sample_rises),
        "kahler": min(state.min_h) > 0.0,
    }
    result.summary = {"rejected_steps": state.rejected_steps, "accepted_steps": state.accepted_steps,
                      "energy_rises": state.energy_rises, "max_energy_rise": state.max_energy_rise,
                      "sample_energy_rises": sample_rises,
                      "final_energy": state.energies[-1], "initial_energy": state.energies[0]}
    return result


# fixed-point

def _fixed_point_config(grid: Grid, p: Mapping[str, Any], T: float) -> FlowConfig:
    return FlowConfig(T, grid, dt=p.get("dt", 1e-3), delta=p["delta"], tolerance=p["tolerance"],
                      max_iterations=p["max_iterations"], time_count=p["count"],
                      quadrature_nodes=p["nodes"], solver="duhamel-fixed-point")


def run_fixed_point(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = _grid(p)
    u0 = _initial_potential(grid, p, config.seed)
    fp = duhamel_fixed_point(u0, _fixed_point_config(grid, p, p["T"]), jobs=config.jobs)
    factors = fp.factors()

    sweep_rows = []
    largest = None
    for T in sorted(p["sweep_T"]):
        try:
            trial = duhamel_fixed_point(u0, _fixed_point_config(grid, p, T), jobs=config.jobs)
            contracting = trial.converged and all(f < 1.0 for f in trial.factors())
            sweep_rows.append((T, trial.converged, len(trial.records), max(trial.factors(), default=0.0)))
        except NoContractionError as e:
            logger.info(f"T={T} 时迭代不压缩: {e}")
            contracting = False
            sweep_rows.append((T, False, len(e.diagnostics.get("x_norm_deltas", [])), float("nan")))
        if contracting:
            largest = T

    lattice = contraction_lattice(u0, _fixed_point_config(grid, p, p["T"]), p["sweep_delta"], p["sweep_T"],
                                  jobs=config.jobs)
    monotone = delta_monotone(lattice)
    if not monotone:
        logger.warning("(δ, T) 格点上压缩性不随 δ 单调")

    result = ExperimentResult()
    result.add("fixed_point.csv", FIXED_POINT_HEADER, fp.csv_rows())
    result.add("contraction_sweep.csv", ("T", "converged", "iterations", "max_factor"), sweep_rows)
    result.add("delta_lattice.csv", LATTICE_HEADER, [q.csv_row() for q in lattice])
    result.add("flow.csv", FLOW_HEADER, fp.state.csv_rows())
    result.acceptance = {
        "contraction_factor": bool(factors) and all(f <= 0.5 for f in factors),
        "converged_within_12": fp.converged and len(fp.records) <= 12,
        "delta_monotone": monotone,
    }
    result.summary = {"iterations": len(fp.records), "factors": factors, "largest_contracting_T": largest}
    return result


# solver-agreement

def run_solver_agreement(config: ExperimentConfig) -> ExperimentResult:
    p = config.parameters
    grid = Grid(1, p["points"])
    u0 = _initial_potential(grid, p, config.seed)
    flow_config = replace(_fixed_point_config(grid, p, p["T"]), dt=p["dt"])
    fp = duhamel_fixed_point(u0, flow_config, jobs=config.jobs)
    reference = richardson_solution(u0, replace(flow_config, solver="semi-implicit"), p["levels"])
    phi_T = fp.phi.slices[-1]
    solver_gap = (phi_T - reference).sup_norm() / reference.sup_norm()

    # 可分离源的闭式解对照
    times = geometric_times(p["T"], p["count"])
    (x,) = grid.mesh()
    flat_source = Source.from_function(grid, lambda s, x: s ** -0.5 * np.cos(x))
    flat_v = volume_potential(flat_source, Propagator.flat(grid), p["T"], times=times,
                              nodes=p["nodes"], tolerance=None, jobs=config.jobs)
    flat_gap = max(
        float(np.max(np.abs(s.samples - separable_response(1.0, t, -0.5) * np.cos(x))))
        / separable_response(1.0, t, -0.5) for t, s in zip(times, flat_v.slices))

    metric = MetricSpec.conformal(grid, p["epsilon"])
    propagator = Propagator.from_metric(metric)
    operator = propagator.operator
    mode = np.zeros(grid.size)
    mode[1] = 1.0
    vector = operator.from_modes(mode)
    lam = float(operator.eigenvalues[1])
    eigen_source = Source(grid, lambda s: SpectralField(grid, s ** -0.5 * vector), "eigenmode")
    eigen_v = volume_potential(eigen_source, propagator, p["T"], times=times, nodes=p["nodes"],
                               tolerance=None, jobs=config.jobs)
    scale = float(np.max(np.abs(vector)))
    eigen_gap = max(
        float(np.max(np.abs(s.samples - separable_response(lam, t, -0.5) * vector)))
        / (separable_response(lam, t, -0.5) * scale) for t, s in zip(times, eigen_v.slices))

    result = ExperimentResult()
    result.add("agreement.csv", ("check", "value", "threshold"),
               [("solver_gap", solver_gap, 1e-4), ("flat_volume_potential", flat_gap, 1e-6),
                ("eigen_volume_potential", eigen_gap, 1e-6)])
    result.add("fixed_point.csv", FIXED_POINT_HEADER, fp.csv_rows())
    result.add("trajectory.csv", TRAJECTORY_HEADER, _trajectory_rows(fp.phi, p["stride"]))
    result.acceptance = {
        "solver_agreement": solver_gap <= 1e-4,
        "volume_potential_oracle": max(flat_gap, eigen_gap) <= 1e-6,
    }
    result.summary = {"solver_gap": solver_gap, "flat_gap": flat_gap, "eigen_gap": eigen_gap,
                      "eigenvalue": lam}
    return result


CATALOG: Dict[str, Experiment] = {e.id: e for e in (
    Experiment("kernel-mass", "平坦环面核与参考核的质量守恒和导数积分", {
        "dim": DIM,
        "points": _points(128),
        "epsilon": _epsilon(0.1),
        "T": _positive(1.0, "最大时间"),
        "count": _count(12, "几何时间网格的时间数"),
        "construction": _choice("both", ("flat", "reference", "both"), "核的构造方式"),
        "max_order": _count(2, "导数积分的最高阶"),
        "stride": _count(8, "核表导出的抽稀步长"),
    }, run_kernel_mass),
    Experiment("kernel-decay", "欧氏核剖面的包络衰减指数与自相似缩放", {
        "dim": DIM,
        "k_values": Parameter(list, [0.0, 1.0, 2.0], lambda v: len(v) > 0 and all(0 <= x <= 6 for x in v),
                              "0..6 的导数阶列表", "导数阶"),
        "t": _positive(1.0, "剖面时间"),
        "r_max": _positive(24.0, "最大半径"),
        "spacing": _positive(0.05, "半径间距"),
        "window_start": _positive(6.0, "拟合窗口的缩放半径下限"),
        "scaling_times": _positive_list([0.25, 1.0, 4.0], "自相似检查的时间"),
        "scaling_radius": _positive(8.0, "自相似检查的最大缩放半径"),
    }, run_kernel_decay),
    Experiment("nu-limit", "I_k(t) 在 t → 0 时收敛到 ν_k", {
        "points": _points(256, 512),
        "epsilon": _epsilon(0.1),
        "k_values": Parameter(list, [0.0, 1.0, 2.0], lambda v: len(v) > 0 and all(0 <= x <= 4 for x in v),
                              "0..4 的导数阶列表", "导数阶"),
        "t_max": _positive(0.02, "二进时间序列的起点"),
        "halvings": _count(10, "时间减半次数"),
        "reference_points": _count(8, "取样的 x 数目"),
    }, run_nu_limit),
    Experiment("smoothing-rates", "粗糙初值的 t^{-k/4} 光滑化速率（线性与 Calabi 流）", {
        "dim": DIM,
        "points": _points(256),
        "T": _positive(0.01, "最大时间"),
        "count": _count(41, "几何时间网格的时间数", 4),
        **DATA_PARAMS,
        "control": _choice("weierstrass", DATA_CLASSES, "连续 ∂∂̄ 对照数据类别"),
        "delta": _unit(0.1, "δ 带宽度"),
        "dt": _positive(1e-3, "流的步长"),
        "flow": Parameter(bool, True, None, "", "是否同时运行 Calabi 流"),
        "stride": _count(4, "轨迹导出的抽稀步长"),
    }, run_smoothing_rates),
    Experiment("schauder-ratio", "加权 Schauder 比值对 T 与 ε 的一致性", {
        "points": _points(64, 512),
        "epsilons": Parameter(list, [0.0, 0.05, 0.1], lambda v: len(v) > 0 and all(0 <= x < 0.5 for x in v),
                              "[0, 0.5) 内的列表", "度量扰动幅度"),
        "T_values": _positive_list([0.2, 0.1, 0.05, 0.025], "时间上界列表"),
        "alpha": _unit(0.5, "Hölder 指数"),
        "count": _count(12, "几何时间网格的时间数", 2),
        "nodes": _count(24, "每段 Gauss 节点数", 2),
    }, run_schauder_ratio),
    Experiment("parametrix-validate", "参数核 + Neumann 级数组装的核与矩阵指数基准比对", {
        "points": _points(64, 256),
        "epsilon": _epsilon(0.1),
        "T": _positive(0.1, "最大时间"),
        "count": _count(24, "几何时间网格的时间数", 2),
        "n_charts": _count(4, "区间数", 2),
        "nodes": _count(16, "卷积 Gauss 节点数", 2),
        "tolerance": _positive(1e-8, "Neumann 停止容差"),
        "stride": _count(8, "核表导出的抽稀步长"),
    }, run_parametrix_validate),
    Experiment("neumann-decay", "Neumann 迭代项的超几何衰减与积分方程残差", {
        "points": _points(64, 256),
        "epsilon": _epsilon(0.1),
        "T": _positive(0.1, "最大时间"),
        "count": _count(24, "几何时间网格的时间数", 2),
        "n_charts": _count(4, "区间数", 2),
        "nodes": _count(16, "卷积 Gauss 节点数", 2),
        "tolerance": _positive(1e-10, "Neumann 停止容差"),
    }, run_neumann_decay),
    Experiment("flow-run", "半隐式 Calabi 流与能量单调性", {
        "dim": DIM,
        "points": _points(128),
        "T": _positive(0.1, "终止时间"),
        "count": _count(16, "记录时间数"),
        **DATA_PARAMS,
        "delta": _unit(0.1, "δ 带宽度"),
        "dt": _positive(1e-3, "步长"),
        "samples": _count(5, "能量单调性检查的随机初值数"),
        "stride": _count(4, "轨迹导出的抽稀步长"),
    }, run_flow_experiment),
    Experiment("fixed-point", "Duhamel 不动点迭代的压缩因子与最大压缩 T", {
        "dim": DIM,
        "points": _points(64),
        "T": _positive(0.01, "时间上界"),
        "count": _count(12, "几何时间网格的时间数", 2),
        **DATA_PARAMS,
        "delta": _unit(0.1, "δ 带宽度"),
        "tolerance": _positive(1e-6, "X_T 差的停止容差"),
        "max_iterations": _count(30, "最多迭代次数"),
        "nodes": _count(24, "每段 Gauss 节点数", 2),
        "sweep_T": _positive_list([0.01, 0.02, 0.05, 0.1], "最大压缩 T 的扫描列表"),
        "sweep_delta": Parameter(list, [0.025, 0.05, 0.1], lambda v: len(v) > 0 and all(0 < x < 1 for x in v),
                                 "(0, 1) 内的非空列表", "δ 单调性格点的 δ 列表"),
    }, run_fixed_point),
    Experiment("solver-agreement", "不动点解与 Richardson 外推半隐式解的一致性及体积位势闭式对照", {
        "dim": DIM_1D,
        "points": _points(64, 512),
        "T": _positive(0.01, "时间上界"),
        "count": _count(12, "几何时间网格的时间数", 2),
        **DATA_PARAMS,
        "data": _choice("smooth", DATA_CLASSES, "初始数据类别"),
        "epsilon": _epsilon(0.1),
        "delta": _unit(0.1, "δ 带宽度"),
        "dt": _positive(1e-4, "半隐式步长"),
        "levels": _count(2, "Richardson 外推层数", 2),
        "tolerance": _positive(1e-9, "不动点停止容差"),
        "max_iterations": _count(30, "最多迭代次数"),
        "nodes": _count(24, "每段 Gauss 节点数", 2),
        "stride": _count(4, "轨迹导出的抽稀步长"),
    }, run_solver_agreement),
)}


def list_experiments() -> str:
    """
    目录文本：每个实验一行说明，下面列出参数及默认值

    返回:
        多行文本
    """
    lines = []
    for experiment in CATALOG.values():
        lines.append(f"{experiment.id:<22}{experiment.description}")
        for name, spec in experiment.schema.items():
            lines.append(f"    {name} = {spec.default!r}  ({spec.description})")
    return "\n".join(lines)
