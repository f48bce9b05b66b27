# -*- coding: utf-8 -*-

import numpy as np
import pytest

from core.errors import DivergenceError, InvalidArgumentError
from core.kernel import MetricSpec, ReferenceOperator
from core.parametrix import (
    DEFECT_GROUPS, ChartLayout, FrozenKernelFamily, assemble_kernel, build_parametrix, compose, convolve_at,
    _flat_source, defect, frozen_kernel, frozen_residual, neumann_series,
)
from core.spectral import geometric_times


@pytest.mark.parametrize("n_charts", [2, 4, 6])
def test_partition_of_unity(grid_1d, n_charts):
    charts = ChartLayout.build(grid_1d, n_charts)
    assert charts.partition_error() <= 1e-12
    assert len(charts.phi) == len(charts.psi) == n_charts
    for p, q in zip(charts.phi, charts.psi):
        assert np.all(q.samples[p.samples > 0] == 1.0)


def test_chart_layout_rejects_bad_input(grid_1d, grid_2d):
    with pytest.raises(InvalidArgumentError):
        ChartLayout.build(grid_1d, 1)
    with pytest.raises(InvalidArgumentError):
        ChartLayout.build(grid_2d, 4)


def test_frozen_columns_match_euclidean_kernel(grid_1d):
    family = FrozenKernelFamily(MetricSpec.conformal(grid_1d, 0.1))
    t = 1e-3
    columns = family.columns(t)
    y = grid_1d.nodes()
    h = grid_1d.spacing
    assert columns[3, 3] == pytest.approx(frozen_kernel(family, 0.0, t, y[3]), rel=1e-8)
    assert columns[5, 3] == pytest.approx(frozen_kernel(family, 2 * h, t, y[3]), rel=1e-7)


def test_frozen_kernel_solves_frozen_equation(grid_1d):
    family = FrozenKernelFamily(MetricSpec.conformal(grid_1d, 0.1))
    assert frozen_residual(family, 0.01, column=7) < 1e-6


def test_flat_parametrix_with_two_charts_is_exact(grid_1d):
    metric = MetricSpec.flat(grid_1d)
    times = geometric_times(0.1, 4)
    Z = build_parametrix(metric, grid_1d, times, n_charts=2)
    flat = _flat_source(grid_1d)
    for t in times:
        assert np.allclose(Z.at(t), flat.at(t), atol=1e-12 * np.max(np.abs(flat.at(t))))
    K = defect(Z)
    for group, sups in K.group_sup_norms().items():
        assert np.max(sups) <= 1e-8, group


def test_flat_composition_is_the_semigroup(grid_1d):
    Z = build_parametrix(MetricSpec.flat(grid_1d), grid_1d, [0.1], n_charts=2)
    scale = np.max(np.abs(Z.at(0.1)))
    assert np.allclose(compose(Z, Z, 0.1, 0.04, Z.weights), Z.at(0.1), atol=1e-9 * scale)
    # 平坦核的时空卷积恰为 t·b(t)
    assert np.allclose(convolve_at(Z, Z, 0.1, Z.weights, nodes=4), 0.1 * Z.at(0.1), atol=1e-9 * scale)


def test_defect_groups_sum_to_total(grid_1d):
    metric = MetricSpec.conformal(grid_1d, 0.1)
    Z = build_parametrix(metric, grid_1d, geometric_times(0.05, 4), n_charts=4)
    K = defect(Z)
    assert set(K.groups) == set(DEFECT_GROUPS)
    assert np.max(K.group_sup_norms()["frozen"]) > 0.0
    t = float(K.times[1])
    assert np.allclose(K.at(t), K.values[1], atol=1e-12 * np.max(np.abs(K.values[1])))


def test_defect_rejects_other_metric(grid_1d):
    Z = build_parametrix(MetricSpec.conformal(grid_1d, 0.1), grid_1d, [0.01], n_charts=4)
    with pytest.raises(InvalidArgumentError):
        defect(Z, metric=MetricSpec.conformal(grid_1d, 0.2))


def test_neumann_series_converges(grid_1d):
    metric = MetricSpec.conformal(grid_1d, 0.1)
    Z = build_parametrix(metric, grid_1d, geometric_times(0.02, 8), n_charts=4)
    series = neumann_series(defect(Z), tolerance=1e-6, nodes=8)
    assert series.sup_norms[-1] < 1e-6
    assert series.terms == len(list(series.csv_rows()))
    assert series.psi.values.shape == (8, 32, 32)


def test_neumann_series_reports_divergence(grid_1d):
    Z = build_parametrix(MetricSpec.conformal(grid_1d, 0.1), grid_1d, geometric_times(0.02, 4), n_charts=4)
    with pytest.raises(DivergenceError):
        neumann_series(defect(Z), tolerance=1e-30, nodes=4, max_terms=1)


def test_assembled_flat_kernel_passes_validation(grid_1d):
    metric = MetricSpec.flat(grid_1d)
    Z = build_parametrix(metric, grid_1d, geometric_times(0.1, 4), n_charts=2)
    series = neumann_series(defect(Z), tolerance=1e-8, nodes=8)
    assert series.terms == 1
    assembled = assemble_kernel(Z, series, ReferenceOperator(metric), nodes=8)
    assert assembled.passed
    assert len(assembled.validation) == 4
    assert all(r.row_l1_error <= 1e-8 for r in assembled.validation)
    assert assembled.asymmetry <= 1e-10
