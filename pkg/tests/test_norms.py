# -*- coding: utf-8 -*-

import numpy as np
import pytest

from core.errors import InsufficientDataError, InvalidArgumentError
from core.kernel import MetricSpec
from core.norms import smoothing_profile, time_derivative, x_norm, x_norm_extended, y_norm
from core.spectral import SpaceTimeField, geometric_times


@pytest.fixture
def times():
    return geometric_times(0.01, 9)


def test_y_norm_terms_add_up(grid_1d, times):
    f = SpaceTimeField.from_function(grid_1d, times, lambda t, x: t ** -0.25 * np.cos(x))
    report = y_norm(f, 0.5)
    assert set(report.terms) == {"sup_c0", "sup_holder", "time_holder"}
    assert report.total == pytest.approx(sum(report.terms.values()))
    assert report.T == pytest.approx(0.01)


def test_y_norm_is_homogeneous(grid_1d, times):
    f = SpaceTimeField.from_function(grid_1d, times, lambda t, x: np.sin(x) + t * np.cos(2 * x))
    assert y_norm(3.0 * f).total == pytest.approx(3.0 * y_norm(f).total, rel=1e-12)


def test_zero_field_has_zero_norms(grid_1d, times):
    zero = SpaceTimeField.zeros(grid_1d, times)
    assert y_norm(zero).total == 0.0
    assert x_norm(zero).total == 0.0


def test_norms_need_two_slices(grid_1d):
    one = SpaceTimeField.zeros(grid_1d, [0.01])
    with pytest.raises(InsufficientDataError):
        y_norm(one)


def test_norms_reject_time_beyond_horizon(grid_1d, times):
    with pytest.raises(InvalidArgumentError):
        x_norm(SpaceTimeField.zeros(grid_1d, times), T=0.001)
    with pytest.raises(InvalidArgumentError):
        y_norm(SpaceTimeField.zeros(grid_1d, times), alpha=1.5)


def test_time_derivative_exact_for_quadratics(grid_1d, times):
    u = SpaceTimeField.from_function(grid_1d, times, lambda t, x: (t ** 2 + 3 * t) * np.sin(x))
    expected = SpaceTimeField.from_function(grid_1d, times, lambda t, x: (2 * t + 3) * np.sin(x))
    assert np.allclose(time_derivative(u).samples(), expected.samples(), atol=1e-9)


def test_x_norm_of_stationary_field(grid_1d, times):
    u = SpaceTimeField.from_function(grid_1d, times, lambda t, x: np.sin(x))
    report = x_norm(u)
    assert len(report.terms) == 11
    assert report.terms["c0_dt"] == 0.0
    assert report.terms["time_holder_nabla4"] == 0.0
    assert report.terms["c0_k0"] == pytest.approx(times[0] ** -0.5, rel=1e-12)
    assert report.terms["c0_k4"] == pytest.approx(1.0, rel=1e-12)


def test_x_norm_with_perturbed_metric(grid_1d, times):
    u = SpaceTimeField.from_function(grid_1d, times, lambda t, x: np.exp(-t) * np.cos(x))
    flat = x_norm(u)
    bent = x_norm(u, metric=MetricSpec.conformal(grid_1d, 0.1))
    assert bent.total > 0.0
    assert bent.total != pytest.approx(flat.total, rel=1e-6)


def test_extended_norm_dominates(grid_1d, times):
    u = SpaceTimeField.from_function(grid_1d, times, lambda t, x: t * np.cos(x) + np.sin(2 * x))
    base = x_norm(u)
    extended = x_norm_extended(u)
    assert extended.total >= base.total
    assert extended.extras["x_total"] == pytest.approx(base.total)
    assert extended.extras["interpolation_constant"] >= 0.0


def test_smoothing_profile_of_single_mode(grid_1d):
    times = geometric_times(0.01, 17)
    # 平坦线性流上 cos x 的解为 e^{-t} cos x
    u = SpaceTimeField.from_function(grid_1d, times, lambda t, x: np.exp(-t) * np.cos(x))
    profile = smoothing_profile(u, k_max=3, l_max=1)
    assert len(profile.rows) == times.size * 4 * 2
    keys = [(r.t, r.k, r.l) for r in profile.rows]
    assert keys == sorted(keys)
    for k in range(4):
        assert abs(profile.slopes[(k, 0)]) < 0.05
    assert np.allclose(profile.values(0, 0), np.exp(-times), rtol=1e-12)


def test_smoothing_profile_of_zero_has_no_slope(grid_1d, times):
    profile = smoothing_profile(SpaceTimeField.zeros(grid_1d, times), k_max=1, l_max=0)
    assert profile.slopes[(0, 0)] is None
