# -*- coding: utf-8 -*-

import os

import numpy as np
import pytest

from core.errors import InvalidArgumentError
from core.generators import DATA_CLASSES, InitialDataGenerator

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.mark.parametrize("kind", [k for k in DATA_CLASSES if k != "file"])
@pytest.mark.parametrize("dim", [1, 2])
def test_builtin_classes_are_calibrated(kind, dim, grid_1d, grid_2d):
    grid = grid_1d if dim == 1 else grid_2d
    generator = InitialDataGenerator(grid, seed=3)
    u0 = generator.generate(kind, target=0.05)
    assert abs(u0.mean()) <= 1e-14
    assert generator.second_derivative_size(u0) == pytest.approx(0.05, rel=1e-12)
    assert generator.generated_count == 1


def test_random_classes_follow_the_seed(grid_1d):
    first = InitialDataGenerator(grid_1d, seed=7).generate("c11")
    again = InitialDataGenerator(grid_1d, seed=7).generate("c11")
    other = InitialDataGenerator(grid_1d, seed=8).generate("c11")
    assert np.array_equal(first.samples, again.samples)
    assert not np.array_equal(first.samples, other.samples)


def test_batch_is_reproducible(grid_1d):
    generator = InitialDataGenerator(grid_1d, seed=1)
    batch = generator.batch("c11", 3)
    assert len(batch) == 3
    assert not np.array_equal(batch[0].samples, batch[1].samples)
    assert generator.generated_count == 3
    again = InitialDataGenerator(grid_1d, seed=1).batch("c11", 3)
    assert all(np.array_equal(a.samples, b.samples) for a, b in zip(batch, again))
    with pytest.raises(InvalidArgumentError):
        generator.batch("c11", 0)


def test_uncalibrated_sawtooth_has_unit_jump(grid_1d):
    generator = InitialDataGenerator(grid_1d)
    u0 = generator.generate("sawtooth", target=None)
    assert generator.second_derivative_size(u0) == pytest.approx(1.0, abs=0.1)


def test_unknown_class_is_rejected(grid_1d):
    generator = InitialDataGenerator(grid_1d)
    with pytest.raises(InvalidArgumentError):
        generator.generate("fractal")
    with pytest.raises(InvalidArgumentError):
        generator.generate("file")


def test_constant_data_cannot_be_calibrated(grid_1d):
    generator = InitialDataGenerator(grid_1d)
    with pytest.raises(InvalidArgumentError):
        generator.calibrate(generator.from_second_derivative(np.ones(grid_1d.shape)), 0.05)


def test_user_generator_file(grid_1d, tmp_path):
    path = tmp_path / "my_data.py"
    path.write_text("import numpy as np\n\ndef generate_initial_data(x):\n    return 3.0 + np.cos(2 * x)\n",
                    encoding="utf-8")
    generator = InitialDataGenerator(grid_1d)
    u0 = generator.generate("file", target=0.04, generator_file=str(path))
    (x,) = grid_1d.mesh()
    assert np.allclose(u0.samples, 0.01 * np.cos(2 * x), atol=1e-15)


def test_user_generator_file_errors(grid_1d, tmp_path):
    generator = InitialDataGenerator(grid_1d)
    with pytest.raises(InvalidArgumentError):
        generator.from_file(str(tmp_path / "missing.py"))
    wrong = tmp_path / "wrong_name.py"
    wrong.write_text("def make_data(x):\n    return []\n", encoding="utf-8")
    with pytest.raises(InvalidArgumentError):
        generator.from_file(str(wrong))
    broken = tmp_path / "broken_data.py"
    broken.write_text("def generate_initial_data(x):\n    raise RuntimeError('boom')\n", encoding="utf-8")
    with pytest.raises(InvalidArgumentError):
        generator.from_file(str(broken))


def test_shipped_example_file(grid_2d):
    generator = InitialDataGenerator(grid_2d)
    u0 = generator.generate("file", target=0.05, generator_file=os.path.join(REPO_ROOT, "initial_data_func.py"))
    assert generator.second_derivative_size(u0) == pytest.approx(0.05, rel=1e-12)
