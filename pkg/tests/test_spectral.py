# -*- coding: utf-8 -*-

import numpy as np
import pytest

from core.errors import InvalidArgumentError
from core.spectral import (
    Grid, SpaceTimeField, SpectralField, dealiased_product, derivative, geometric_times,
    holder_seminorm, laplacian, tensor_components, pointwise_norm,
)


@pytest.mark.parametrize("points", [8, 24, 100])
def test_grid_rejects_bad_sizes(points):
    with pytest.raises(InvalidArgumentError):
        Grid(1, points)


def test_grid_rejects_dimension_three():
    with pytest.raises(InvalidArgumentError):
        Grid(3, 16)


def test_derivative_of_sine(grid_1d):
    f = SpectralField.from_function(grid_1d, np.sin)
    (x,) = grid_1d.mesh()
    assert np.allclose(derivative(f, 1).samples, np.cos(x), atol=1e-12)
    assert np.allclose(derivative(f, 3).samples, -np.cos(x), atol=1e-11)


def test_negative_order_is_rejected(grid_1d):
    f = SpectralField.from_function(grid_1d, np.sin)
    with pytest.raises(InvalidArgumentError):
        derivative(f, -1)


def test_laplacian_2d_eigenfunction(grid_2d):
    f = SpectralField.from_function(grid_2d, lambda x, y: np.cos(2 * x) * np.cos(y))
    assert np.allclose(laplacian(f).samples, -5.0 * f.samples, atol=1e-12)


def test_mixed_tensor_norm_2d(grid_2d):
    # |∇²f|² = 2 sin²x sin²y + 2 cos²x cos²y
    f = SpectralField.from_function(grid_2d, lambda x, y: np.sin(x) * np.sin(y))
    x, y = grid_2d.mesh()
    expected = np.sqrt(2 * (np.sin(x) * np.sin(y)) ** 2 + 2 * (np.cos(x) * np.cos(y)) ** 2)
    assert np.allclose(pointwise_norm(tensor_components(f, 2)), expected, atol=1e-12)


def test_dealiased_product_keeps_low_modes(grid_1d):
    f = SpectralField.from_function(grid_1d, np.cos)
    product = dealiased_product(f, f)
    (x,) = grid_1d.mesh()
    assert np.allclose(product.samples, 0.5 + 0.5 * np.cos(2 * x), atol=1e-13)


def test_mean_and_integral(grid_2d):
    f = SpectralField.from_function(grid_2d, lambda x, y: 3.0 + np.sin(x) * np.cos(y))
    assert f.mean() == pytest.approx(3.0, abs=1e-13)
    assert f.integral() == pytest.approx(3.0 * (2 * np.pi) ** 2, rel=1e-13)


def test_grid_mismatch_is_rejected(grid_1d):
    other = Grid(1, 64)
    with pytest.raises(InvalidArgumentError):
        SpectralField.constant(grid_1d) + SpectralField.constant(other)


def test_holder_seminorm_bounds(grid_1d):
    assert holder_seminorm(SpectralField.constant(grid_1d, 2.0), 0.5) == 0.0
    value = holder_seminorm(SpectralField.from_function(grid_1d, np.sin), 0.5)
    # |sin a - sin b| <= |a-b|，距离上限 π/2
    assert 0.0 < value <= np.sqrt(np.pi / 2) + 1e-12


def test_holder_rejects_bad_exponent(grid_1d):
    with pytest.raises(InvalidArgumentError):
        holder_seminorm(SpectralField.constant(grid_1d), 1.0)


def test_geometric_times():
    times = geometric_times(1.0, 5)
    assert times[-1] == pytest.approx(1.0)
    assert np.all(np.diff(times) > 0)
    assert times[1] / times[0] == pytest.approx(2.0 ** 0.25)
    with pytest.raises(InvalidArgumentError):
        geometric_times(-1.0, 5)


def test_spacetime_field_checks(grid_1d):
    f = SpectralField.constant(grid_1d, 1.0)
    with pytest.raises(InvalidArgumentError):
        SpaceTimeField(np.array([0.2, 0.1]), (f, f))
    with pytest.raises(InvalidArgumentError):
        SpaceTimeField(np.array([0.1]), (f, f))


def test_spacetime_window_and_arithmetic(grid_1d):
    times = geometric_times(1.0, 4)
    u = SpaceTimeField.from_function(grid_1d, times, lambda t, x: t * np.sin(x))
    w = u.window(0.9)
    assert len(w) == 3
    doubled = u + u
    assert np.allclose(doubled.samples(), 2 * u.samples())
    assert np.allclose((u - u).samples(), 0.0)
    with pytest.raises(InvalidArgumentError):
        u.window(1e-3)
