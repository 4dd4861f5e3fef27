#! IMPORTS


import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pathwisehj import (
    GridFn,
    PeriodicGrid1D,
    centered_gradient,
    gradient_forward,
    lipschitz_constant,
    make_initial,
    oscillation,
    sample,
    second_difference,
    shift,
)


#! TESTS


def test_grid_rejects_small_n():
    with pytest.raises(ValueError, match="n must be >= 8"):
        PeriodicGrid1D(4)


def test_grid_rejects_nonpositive_period():
    with pytest.raises(ValueError):
        PeriodicGrid1D(16, 0.0)


def test_nodes_and_spacing():
    grid = PeriodicGrid1D(8, 2.0)
    assert grid.h == 0.25
    assert_allclose(grid.nodes, np.arange(8) * 0.25)
    assert grid == PeriodicGrid1D(8, 2.0)
    assert grid.to_dict() == {"n": 8, "period": 2.0}


def test_sample_zero():
    u = sample(lambda x: 0.0, PeriodicGrid1D(16))
    assert_array_equal(u.values, np.zeros(16))


def test_sample_cosine_nodes():
    u = sample(lambda x: np.cos(2 * np.pi * x), PeriodicGrid1D(8))
    assert u.values[0] == 1.0
    assert u.values[4] == -1.0


def test_sample_sawtooth_period_two():
    u = sample(lambda x: 1 - abs(x - 1), PeriodicGrid1D(8, 2.0))
    assert_allclose(u.values, [0, 0.25, 0.5, 0.75, 1, 0.75, 0.5, 0.25])
    assert u.values[6] == 0.5


def test_sample_rejects_nonfinite():
    with pytest.raises(ValueError):
        sample(lambda x: np.inf, PeriodicGrid1D(8))


def test_values_are_frozen():
    u = sample(lambda x: x, PeriodicGrid1D(8))
    with pytest.raises(ValueError):
        u.values[0] = 1.0


def test_gradient_forward():
    grid = PeriodicGrid1D(256)
    assert_array_equal(gradient_forward(sample(lambda x: 3.0, grid)).values, 0)
    line = sample(lambda x: x, grid)
    assert_allclose(gradient_forward(line).values[:-1], 1.0, rtol=1e-12)
    u = sample(lambda x: np.cos(2 * np.pi * x), grid)
    exact = -2 * np.pi * np.sin(2 * np.pi * grid.nodes + np.pi * grid.h)
    assert np.max(np.abs(gradient_forward(u).values - exact)) < 0.1


def test_centered_gradient():
    grid = PeriodicGrid1D(256)
    u = sample(lambda x: np.sin(2 * np.pi * x), grid)
    exact = 2 * np.pi * np.cos(2 * np.pi * grid.nodes)
    assert np.max(np.abs(centered_gradient(u).values - exact)) < 0.01


def test_second_difference():
    grid = PeriodicGrid1D(256)
    affine = sample(lambda x: 2 * x + 1, grid)
    assert_allclose(second_difference(affine).values[1:-1], 0, atol=1e-9)
    parabola = sample(lambda x: x**2, grid)
    assert_allclose(second_difference(parabola).values[1:-1], 2.0, rtol=1e-9)
    u = sample(lambda x: np.cos(2 * np.pi * x), grid)
    exact = -4 * np.pi**2 * np.cos(2 * np.pi * grid.nodes)
    assert np.max(np.abs(second_difference(u).values - exact)) < 0.02 * 4 * np.pi**2


def test_oscillation():
    assert oscillation(sample(lambda x: 2.0, PeriodicGrid1D(16))) == 0
    assert oscillation(sample(lambda x: np.cos(2 * np.pi * x), PeriodicGrid1D(16))) == 2
    saw = make_initial("sawtooth", {"slope": 1.0}, PeriodicGrid1D(16, 2.0))
    assert oscillation(saw) == 1


def test_lipschitz_constant():
    assert lipschitz_constant(sample(lambda x: 2.0, PeriodicGrid1D(16))) == 0
    saw = make_initial("sawtooth", {"slope": 1.0}, PeriodicGrid1D(64, 2.0))
    assert_allclose(lipschitz_constant(saw), 1.0, rtol=1e-12)
    u = sample(lambda x: np.cos(2 * np.pi * x), PeriodicGrid1D(256))
    assert abs(lipschitz_constant(u) - 2 * np.pi) < 0.05


@pytest.mark.parametrize("s", [-5, 0, 1, 17, 300])
def test_translation_invariance(s):
    rng = np.random.default_rng(s + 10)
    u = GridFn(PeriodicGrid1D(64), rng.standard_normal(64))
    v = shift(u, s)
    assert v.values[s % 64] == u.values[0]
    assert oscillation(v) == oscillation(u)
    assert lipschitz_constant(v) == lipschitz_constant(u)


def test_csv(tmp_path):
    grid = PeriodicGrid1D(32, 2.0)
    u = sample(lambda x: np.sin(np.pi * x), grid)
    file = str(tmp_path / "u.csv")
    u.to_csv(file)
    v = GridFn.read_csv(file, 2.0)
    assert v.grid == grid
    assert_array_equal(v.values, u.values)
