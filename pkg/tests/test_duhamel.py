# -*- coding: utf-8 -*-

import numpy as np
import pytest
from scipy import integrate

from core.duhamel import (
    Propagator, Source, duhamel_nodes, duhamel_residual, propagate_initial, schauder_ratio,
    separable_response, volume_potential,
)
from core.errors import ExplicitTimesError, InvalidArgumentError
from core.kernel import MetricSpec, flat_torus_kernel
from core.spectral import SpaceTimeField, SpectralField, geometric_times


def test_separable_response_closed_forms():
    lam, t = 16.0, 0.01
    assert separable_response(lam, t, 0.0) == pytest.approx((1 - np.exp(-lam * t)) / lam, rel=1e-14)
    assert separable_response(0.0, t, 0.0) == t
    direct, _ = integrate.quad(lambda s: np.exp(-lam * (t - s)), 0.0, t, weight="alg", wvar=(-0.5, 0.0))
    assert separable_response(lam, t, -0.5) == pytest.approx(direct, rel=1e-12)
    assert separable_response(0.0, t, -0.5) == pytest.approx(2 * np.sqrt(t))


def test_separable_response_rejects_bad_power():
    with pytest.raises(InvalidArgumentError):
        separable_response(1.0, 1.0, -1.0)


def test_duhamel_nodes_integrate_singular_weight():
    nodes, weights = duhamel_nodes(0.5, 24)
    assert np.all((nodes > 0) & (nodes < 0.5))
    assert np.sum(weights) == pytest.approx(0.5, rel=1e-14)
    assert np.sum(weights * nodes ** -0.5) == pytest.approx(2 * np.sqrt(0.5), rel=1e-10)


def test_volume_potential_separable_source(grid_1d):
    times = geometric_times(0.01, 6)
    source = Source.from_function(grid_1d, lambda s, x: s ** -0.5 * np.cos(2 * x))
    v = volume_potential(source, Propagator.flat(grid_1d), times=times)
    (x,) = grid_1d.mesh()
    for t, slice_ in zip(times, v.slices):
        expected = separable_response(16.0, t, -0.5) * np.cos(2 * x)
        assert np.max(np.abs(slice_.samples - expected)) <= 1e-8 * np.max(np.abs(expected))


def test_volume_potential_of_constant_on_perturbed_metric(grid_1d):
    propagator = Propagator.from_metric(MetricSpec.conformal(grid_1d, 0.1))
    assert propagator.kind == "eigen"
    source = Source.from_function(grid_1d, lambda s, x: np.ones_like(x))
    times = [0.001, 0.01]
    v = volume_potential(source, propagator, times=times)
    for t, slice_ in zip(times, v.slices):
        assert np.allclose(slice_.samples, t, rtol=1e-10)


def test_volume_potential_requires_any_time_propagator(grid_1d):
    table = flat_torus_kernel(grid_1d, [0.01])
    propagator = Propagator.from_table(table)
    source = Source.from_function(grid_1d, lambda s, x: np.cos(x))
    with pytest.raises(ExplicitTimesError):
        volume_potential(source, propagator, times=[0.01])
    # 表中显式给出的时间可以直接传播
    u0 = SpectralField.from_function(grid_1d, np.cos)
    assert np.allclose(propagator.apply(u0, 0.01).samples,
                       Propagator.flat(grid_1d).apply(u0, 0.01).samples, atol=1e-12)


def test_volume_potential_needs_output_times(grid_1d):
    source = Source.from_function(grid_1d, lambda s, x: np.cos(x))
    with pytest.raises(InvalidArgumentError):
        volume_potential(source, Propagator.flat(grid_1d))


def test_propagate_initial_single_mode(grid_1d):
    u0 = SpectralField.from_function(grid_1d, lambda x: np.cos(x) + np.sin(2 * x))
    times = [0.01, 0.1]
    u = propagate_initial(u0, times)
    (x,) = grid_1d.mesh()
    for t, slice_ in zip(times, u.slices):
        assert np.allclose(slice_.samples, np.exp(-t) * np.cos(x) + np.exp(-16 * t) * np.sin(2 * x), atol=1e-13)


def test_duhamel_residual_is_small(grid_1d):
    source = Source.from_function(grid_1d, lambda s, x: np.cos(x) + s * np.sin(x))
    assert duhamel_residual(source, Propagator.flat(grid_1d), 0.01) < 1e-5


def test_source_from_field_reproduces_singular_profile(grid_1d):
    times = geometric_times(0.01, 8)
    f = SpaceTimeField.from_function(grid_1d, times, lambda t, x: t ** -0.5 * np.cos(x))
    source = Source.from_field(f)
    (x,) = grid_1d.mesh()
    s = 0.5 * (times[2] + times[3])
    assert np.allclose(source(s).samples, s ** -0.5 * np.cos(x), rtol=1e-10)


def test_schauder_ratio_record(grid_1d):
    metric = MetricSpec.flat(grid_1d)
    source = Source.from_function(grid_1d, lambda s, x: s ** -0.5 * np.cos(x) + np.sin(2 * x))
    record = schauder_ratio(metric, source, 0.01, count=6, nodes=16)
    assert record.ratio == pytest.approx(record.x_norm / record.y_norm)
    assert record.ratio > 0.0
    assert len(record.csv_row()) == 6
    assert record.x_report.T == pytest.approx(0.01)


def test_schauder_ratio_rejects_zero_source(grid_1d):
    source = Source.from_function(grid_1d, lambda s, x: np.zeros_like(x))
    with pytest.raises(InvalidArgumentError):
        schauder_ratio(MetricSpec.flat(grid_1d), source, 0.01, count=4)
