# -*- coding: utf-8 -*-

import itertools

import pytest

import core.calabi as calabi_module
from core.config_parser import ConfigParser
from core.errors import DeltaBandViolation, InvalidArgumentError
from core.experiments import (
    CATALOG, FIXED_POINT_HEADER, FLOW_HEADER, LATTICE_HEADER, NEUMANN_HEADER, PROFILE_HEADER, RATIO_HEADER,
    SMOOTHING_HEADER, TRAJECTORY_HEADER, VALIDATION_HEADER, KERNEL_TABLE_HEADER, list_experiments,
    super_geometric_start,
)

EXPERIMENT_IDS = ("kernel-mass", "kernel-decay", "nu-limit", "smoothing-rates", "schauder-ratio",
                  "parametrix-validate", "neumann-decay", "flow-run", "fixed-point", "solver-agreement")


def make_config(tmp_path, experiment, *overrides):
    return ConfigParser(str(tmp_path / "c.toml"), [f"experiment={experiment!r}", *overrides],
                        environ={}).load(CATALOG)


def run(tmp_path, experiment, *overrides):
    return CATALOG[experiment].run(make_config(tmp_path, experiment, *overrides))


def headers(result):
    return {t.name: tuple(t.header) for t in result.tables}


def test_catalog_ids():
    assert tuple(CATALOG) == EXPERIMENT_IDS
    text = list_experiments()
    for experiment_id in EXPERIMENT_IDS:
        assert experiment_id in text


@pytest.mark.parametrize("ratios, expected", [
    ([0.3, 0.2, 0.1], 1),
    ([0.5, 0.6, 0.4, 0.3, 0.2], 2),
    ([0.1, 0.2], None),
    ([0.5], 1),
    ([], None),
])
def test_super_geometric_start(ratios, expected):
    assert super_geometric_start(ratios) == expected


def test_kernel_mass_run(tmp_path):
    config = make_config(tmp_path, "kernel-mass", "points=32", "count=4")
    result = CATALOG["kernel-mass"].run(config)
    assert result.acceptance == {"mass_error": True, "derivative_integrals": True}
    names = [t.name for t in result.tables]
    assert names == ["mass.csv", "kernel_table.csv"]
    # flat 与 reference 各 4 个时间
    assert len(result.tables[0].rows) == 8


def test_kernel_mass_reference_needs_one_dimension(tmp_path):
    config = make_config(tmp_path, "kernel-mass", "dim=2", "points=16", "count=2", "T=0.5",
                         "construction='reference'")
    with pytest.raises(InvalidArgumentError):
        CATALOG["kernel-mass"].run(config)


def test_flow_run_small(tmp_path):
    config = make_config(tmp_path, "flow-run", "points=32", "T=0.01", "count=4", "samples=2", "data='smooth'")
    result = CATALOG["flow-run"].run(config)
    assert result.acceptance["kahler"]
    assert result.acceptance["energy_monotone"]
    assert {t.name for t in result.tables} == {"flow.csv", "trajectory.csv", "energy_samples.csv"}


def test_flow_run_rejects_large_data(tmp_path):
    config = make_config(tmp_path, "flow-run", "points=32", "amplitude=0.5", "delta=0.1")
    with pytest.raises(DeltaBandViolation):
        CATALOG["flow-run"].run(config)


def test_flow_run_reports_energy_rise(monkeypatch, tmp_path):
    counter = itertools.count(1.0)
    monkeypatch.setattr(calabi_module, "calabi_energy", lambda p: float(next(counter)))
    result = run(tmp_path, "flow-run", "points=32", "T=0.01", "count=4", "samples=1", "data='smooth'")
    assert result.acceptance["energy_monotone"] is False
    assert result.acceptance["kahler"]
    assert result.summary["rejected_steps"] == 0
    assert result.summary["energy_rises"] == result.summary["accepted_steps"] > 0


def test_kernel_decay_run(tmp_path):
    result = run(tmp_path, "kernel-decay", "k_values=[0, 1]", "r_max=20.0", "spacing=0.1",
                 "scaling_times=[0.25, 4.0]", "scaling_radius=4.0")
    assert headers(result) == {
        "profile_k0.csv": PROFILE_HEADER,
        "profile_k1.csv": PROFILE_HEADER,
        "decay_fit.csv": ("kernel", "k", "C", "delta", "exponent", "prefactor_power", "points_used"),
        "scaling.csv": ("k", "t", "relative_error"),
    }
    summary = result.summary
    assert len(summary["exponents"]) == 2
    assert result.acceptance["decay_exponent"] == all(abs(e - 4 / 3) <= 0.05 for e in summary["exponents"])
    assert result.acceptance["gaussian_control"] == (abs(summary["gaussian_exponent"] - 2.0) <= 0.05)
    assert result.acceptance["scaling_identity"] == (summary["max_scaling_error"] <= 1e-10)
    assert summary["max_scaling_error"] < 1e-6
    assert abs(summary["gaussian_exponent"] - 2.0) < 0.2
    assert summary["mass_within_r_max"] == pytest.approx(1.0, abs=1e-6)


def test_nu_limit_run(tmp_path):
    result = run(tmp_path, "nu-limit", "points=64", "k_values=[0]", "halvings=5", "reference_points=4")
    assert headers(result) == {"convergence.csv": ("metric", "k", "t", "minimum", "maximum", "gap", "nu")}
    gaps = result.summary["final_gaps"]
    assert result.acceptance == {
        "perturbed_final_gap": all(g < 0.02 for g in gaps["perturbed"]),
        "flat_exact": all(g <= 1e-6 for g in gaps["flat"]),
        "span_decades": result.summary["span_decades"] >= 2.0,
    }
    # 64 点时 0.02 / 2^5 仍在分辨率之上，跨度只有 1.5 个数量级
    assert result.summary["span_decades"] == pytest.approx(5 * 0.30103, rel=1e-4)
    assert result.acceptance["span_decades"] is False


def test_smoothing_rates_run(tmp_path):
    result = run(tmp_path, "smoothing-rates", "points=32", "T=0.01", "count=8", "dt=0.001", "stride=8")
    assert headers(result) == {
        "smoothing_linear.csv": SMOOTHING_HEADER,
        "smoothing_flow.csv": SMOOTHING_HEADER,
        "trajectory.csv": TRAJECTORY_HEADER,
        "smoothing_control.csv": SMOOTHING_HEADER,
        "slopes.csv": ("source", "k", "l", "slope"),
    }
    assert set(result.acceptance) == {"c1_gap", "linear_slopes", "flow_slopes", "control_decay"}
    summary = result.summary
    assert result.acceptance["c1_gap"] == (summary["c1_gap_ratio"] < 0.05)
    for source in ("linear", "flow"):
        slopes = summary["slopes"][source]
        expected = all(slopes[str(k)] is not None and abs(slopes[str(k)] + k / 4) <= 0.1 for k in (1, 2, 3))
        assert result.acceptance[f"{source}_slopes"] == expected
    assert result.acceptance["control_decay"] == (max(summary["control_weighted_over_initial"]) < 0.1)


def test_smoothing_rates_without_flow(tmp_path):
    result = run(tmp_path, "smoothing-rates", "points=32", "T=0.01", "count=6", "flow=false")
    assert "smoothing_flow.csv" not in headers(result)
    assert set(result.acceptance) == {"linear_slopes", "control_decay"}


def test_schauder_ratio_run(tmp_path):
    result = run(tmp_path, "schauder-ratio", "points=32", "epsilons=[0.0, 0.1]", "T_values=[0.05, 0.025]",
                 "count=4", "nodes=6")
    assert headers(result) == {"ratio.csv": RATIO_HEADER}
    rows = result.tables[0].rows
    assert len(rows) == 4
    ratios = [row[-1] for row in rows]
    assert all(r > 0 for r in ratios)
    assert result.summary["ratio_spread"] == pytest.approx(max(ratios) / min(ratios))
    assert result.acceptance == {"ratio_uniformity": result.summary["ratio_spread"] < 2.0}


def test_parametrix_validate_run(tmp_path):
    result = run(tmp_path, "parametrix-validate", "points=32", "T=0.02", "count=8", "n_charts=4", "nodes=8",
                 "tolerance=1e-6", "stride=8")
    assert headers(result) == {
        "validation.csv": VALIDATION_HEADER,
        "neumann.csv": NEUMANN_HEADER,
        "defect_groups.csv": ("t", "frozen", "lower_order", "cutoff"),
        "kernel_table.csv": KERNEL_TABLE_HEADER,
    }
    validation = next(t for t in result.tables if t.name == "validation.csv").rows
    assert len(validation) == result.summary["validated_times"]
    assert result.acceptance == {
        "row_l1_error": bool(validation) and all(r[1] <= 1e-3 for r in validation),
        "pde_residual": bool(validation) and all(r[3] <= 1e-4 for r in validation),
        "defect_order": abs(result.summary["defect_slope"] + 1.0) <= 0.1,
    }
    assert 0.0 <= result.summary["frozen_residual"] < 1e-4


def test_neumann_decay_run(tmp_path):
    result = run(tmp_path, "neumann-decay", "points=32", "T=0.02", "count=8", "n_charts=4", "nodes=8",
                 "tolerance=1e-8")
    assert headers(result) == {"neumann.csv": NEUMANN_HEADER,
                               "defect_groups.csv": ("t", "frozen", "lower_order", "cutoff")}
    summary = result.summary
    assert summary["m0"] == super_geometric_start(summary["ratios"])
    assert result.acceptance["super_geometric"] == (summary["m0"] is not None and summary["m0"] <= 8)
    assert set(result.acceptance) == {"super_geometric", "integral_equation_residual"}


def test_fixed_point_run(tmp_path):
    result = run(tmp_path, "fixed-point", "points=32", "T=0.005", "count=4", "nodes=6", "tolerance=1e-8",
                 "data='smooth'", "amplitude=0.02", "sweep_T=[0.002, 0.005]", "sweep_delta=[0.05, 0.1]")
    assert headers(result) == {
        "fixed_point.csv": FIXED_POINT_HEADER,
        "contraction_sweep.csv": ("T", "converged", "iterations", "max_factor"),
        "delta_lattice.csv": LATTICE_HEADER,
        "flow.csv": FLOW_HEADER,
    }
    sweep = next(t for t in result.tables if t.name == "contraction_sweep.csv").rows
    contracting = [T for T, converged, _, factor in sweep if converged and factor < 1.0]
    assert result.summary["largest_contracting_T"] == (max(contracting) if contracting else None)
    lattice = next(t for t in result.tables if t.name == "delta_lattice.csv").rows
    assert [(row[0], row[1]) for row in lattice] == [(0.05, 0.002), (0.05, 0.005), (0.1, 0.002), (0.1, 0.005)]
    assert result.acceptance["delta_monotone"]
    factors = result.summary["factors"]
    assert result.acceptance["contraction_factor"] == (bool(factors) and all(f <= 0.5 for f in factors))


def test_solver_agreement_run(tmp_path):
    result = run(tmp_path, "solver-agreement", "points=32", "T=0.005", "count=4", "dt=1e-4", "nodes=8",
                 "tolerance=1e-10", "amplitude=0.02", "stride=8")
    assert headers(result) == {
        "agreement.csv": ("check", "value", "threshold"),
        "fixed_point.csv": FIXED_POINT_HEADER,
        "trajectory.csv": TRAJECTORY_HEADER,
    }
    summary = result.summary
    assert result.acceptance == {
        "solver_agreement": summary["solver_gap"] <= 1e-4,
        "volume_potential_oracle": max(summary["flat_gap"], summary["eigen_gap"]) <= 1e-6,
    }
    assert summary["eigenvalue"] > 0.0
