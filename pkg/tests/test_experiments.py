#! IMPORTS


import json
import os
import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pathwisehj import (
    Hamiltonian,
    LimitEnsemble,
    LongTimeRun,
    PeriodicGrid1D,
    conditioned_events_check,
    deterministic_limit,
    event_surrogate,
    longtime_run,
    make_hamiltonian,
    make_initial,
    make_initial_2d,
    piecewise_linear,
    ramp,
    random_limit_montecarlo,
    sample_brownian,
    skeleton,
    sup_distance,
)


#! FIXTURES


@pytest.fixture
def sawtooth_abs():
    grid = PeriodicGrid1D(256, 2.0)
    u0 = make_initial("sawtooth", {"slope": 1.0}, grid)
    return u0, make_hamiltonian("abs", P=1.0)


#! TESTS


def test_make_initial():
    grid = PeriodicGrid1D(8)
    u = make_initial("cos", {"amplitude": 2.0, "frequency": 2.0}, grid)
    assert_allclose(u.values[[0, 2]], [2.0, -2.0])
    assert_array_equal(make_initial("constant", {"value": 3.0}, grid).values, 3.0)
    assert_allclose(make_initial("cos", None, grid).values, np.cos(2 * np.pi * grid.nodes), atol=1e-15)
    saw = make_initial("sawtooth", {"slope": 2.0}, PeriodicGrid1D(8, 2.0))
    assert saw.max() == 2.0
    assert saw.min() == 0.0
    with pytest.raises(ValueError, match="unknown initial"):
        make_initial("square", {}, grid)
    with pytest.raises(ValueError, match="unknown parameters"):
        make_initial("cos", {"phase": 1.0}, grid)


def test_make_initial_2d():
    u = make_initial_2d("cos", {"amplitude": 0.5}, 16, 8)
    assert u.values.shape == (16, 8)
    assert u.values[0, 0] == 0.5
    assert u.values[8, 0] == pytest.approx(-0.5)
    const = make_initial_2d("constant", {"value": 1.5}, 8, 8)
    assert_array_equal(const.values, 1.5)
    with pytest.raises(ValueError):
        make_initial_2d("sawtooth", {}, 8, 8)


def test_longtime_cosine_ramp(cos512, quadratic):
    run = longtime_run(cos512, quadratic, ramp(1.0, 10.0), eps_conv=0.02)
    assert len(run.times) == 65
    assert run.times[-1] == 10.0
    assert np.all(np.diff(run.max_series[:, 1]) <= 0)
    assert np.all(np.diff(run.min_series[:, 1]) >= 0)
    assert np.all(np.diff(run.oscillation_series[:, 1]) <= 1e-12)
    # the maximum of cos is preserved by the sup-convolution
    assert run.max_series[-1, 1] == 1.0
    assert abs(run.limit_estimate - 1.0) <= run.error_bar + 2 * cos512.h
    assert 6.0 <= run.converged_at <= 6.5


def test_longtime_brownian_converges():
    u0 = make_initial("cos", {}, PeriodicGrid1D(256))
    H = make_hamiltonian("quadratic", {"a": 1.0}, P=8.0)
    p = sample_brownian(11, 8.0, 1e-2)
    # a monotone swing of size a leaves an oscillation of at most 1 / (8 a)
    swing = np.max(np.abs(np.diff(skeleton(p).reduced.values)))
    eps = 1 / (8 * swing) + 12 * u0.h
    run = longtime_run(u0, H, p, eps_conv=eps)
    assert run.converged_at is not None
    assert run.oscillation_series[-1, 1] <= eps
    assert np.all(np.diff(run.oscillation_series[:, 1]) <= 1e-12)


def test_longtime_constant_path(cos512, quadratic):
    p = piecewise_linear([(0, 0), (2, 0)])
    run = longtime_run(cos512, quadratic, p, [0.0, 1.0, 2.0])
    assert run.converged_at is None
    assert run.limit_estimate == pytest.approx(0.0, abs=1e-12)
    assert run.error_bar == pytest.approx(1.0)


def test_longtime_validation(cos512, quadratic):
    shifted = Hamiltonian(lambda p: 0.5 * p**2 + 1.0, 8.0)
    with pytest.raises(ValueError, match="H\\(0\\)"):
        longtime_run(cos512, shifted, ramp(1.0, 1.0))
    with pytest.raises(ValueError, match="eps_conv"):
        longtime_run(cos512, quadratic, ramp(1.0, 1.0), eps_conv=0.0)


def test_longtime_run_frame(tmp_path):
    run = LongTimeRun([0.0, 1.0, 2.0], [1.0, 0.8, 0.6], [0.0, 0.4, 0.59], 0.05)
    assert run.converged_at == 2.0
    assert run.limit_estimate == pytest.approx(0.595)
    assert run.error_bar == pytest.approx(0.005)
    file = str(tmp_path / "series.csv")
    run.to_csv(file)
    frame = pd.read_csv(file)
    assert list(frame.columns) == ["t", "max", "min", "oscillation"]
    assert_allclose(frame["oscillation"], [1.0, 0.4, 0.01])


@pytest.mark.parametrize("slope,expected", [(1.0, 1.0), (-1.0, 0.0)])
def test_deterministic_limit_ramps(sawtooth_abs, slope, expected):
    u0, H = sawtooth_abs
    assert deterministic_limit(u0, H, ramp(slope, 4.0)) == expected


def test_deterministic_limit_zigzag(sawtooth_abs):
    u0, H = sawtooth_abs
    # closing of the sawtooth: the peak stays at 1, the valley rises to 0.5
    p = piecewise_linear([(0, 0), (0.5, 0.5), (0.9, 0.1)])
    assert deterministic_limit(u0, H, p) == pytest.approx(0.75)


def test_event_surrogate():
    for sign in [1, -1]:
        p = event_surrogate(sign, 0.25)
        assert p.T == 2.0
        assert p.values[0] == 0.0
        assert sup_distance(p, ramp(float(sign), 2.0)) <= 0.25
        assert p.provenance["kind"] == "event_surrogate"
    exact = event_surrogate(1, 0.0)
    assert_allclose(exact.values, exact.times)
    with pytest.raises(ValueError):
        event_surrogate(1, -0.1)


@pytest.mark.parametrize("eps", [0.25, 0.1, 0.0])
def test_conditioned_events(eps):
    reports = conditioned_events_check(eps=eps, n=128)
    assert [i.quantity for i in reports] == ["event_plus_min", "event_minus_max"]
    assert all(i.passed for i in reports)
    plus, minus = reports
    assert plus.bound == pytest.approx(1 - eps)
    assert minus.bound == pytest.approx(eps)
    if eps == 0.0:
        assert plus.measured == 1.0
        assert minus.measured == 0.0


def test_conditioned_events_rejection_falls_back():
    reports = conditioned_events_check(eps=0.25, n=128, rejection_tries=3)
    assert all(i.passed for i in reports)


def test_limit_ensemble(tmp_path):
    ens = LimitEnsemble([0, 1, 2, 3], [0.2, 0.8, 0.5, 0.5], [1.0, np.nan, 2.0, 3.0])
    assert len(ens) == 4
    assert ens.mean == pytest.approx(0.5)
    assert ens.variance == pytest.approx(0.045)
    assert ens.symmetry_stat == pytest.approx(0.0)
    assert ens.checks() == {"variance": True, "mean": True, "symmetry": True}
    summary = ens.save(str(tmp_path))
    assert summary["converged"] == 3
    assert summary["all_passed"]
    frame = pd.read_csv(os.path.join(str(tmp_path), "ensemble.csv"))
    assert list(frame.columns) == ["seed", "limit", "converged_at"]
    with open(os.path.join(str(tmp_path), "summary.json"), "r") as buf:
        assert json.load(buf)["n_paths"] == 4


def test_limit_ensemble_degenerate():
    ens = LimitEnsemble(range(4), [1.0, 1.0, 1.0, 1.0])
    flags = ens.checks()
    assert not flags["variance"]
    assert not flags["mean"]
    assert np.all(np.isnan(ens.converged_at))


def test_montecarlo_small_ensemble():
    kwargs = dict(n_paths=100, seed0=3, T=1.0, dt=1e-2, grid_n=64)
    a = random_limit_montecarlo(**kwargs)
    b = random_limit_montecarlo(**kwargs)
    assert len(a) == 100
    assert_array_equal(a.seeds, np.arange(3, 103))
    assert_array_equal(a.limits, b.limits)
    assert np.all((a.limits >= 0) & (a.limits <= 1))
    assert a.params["grid_n"] == 64


def test_montecarlo_needs_enough_paths():
    with pytest.raises(ValueError, match="n_paths"):
        random_limit_montecarlo(50)


@pytest.mark.slow
def test_montecarlo_random_limit_law():
    ens = random_limit_montecarlo(500)
    assert ens.variance > 0.01
    assert abs(ens.mean - 0.5) < 0.05
    assert ens.symmetry_stat < 0.15
