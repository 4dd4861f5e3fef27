#! IMPORTS


import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pathwisehj import (
    GridFn,
    GridFn2D,
    IncrementTooSmall,
    PeriodicGrid1D,
    QuadraticHamiltonian2D,
    WindowTooLarge,
    apply_flow,
    default_slope_range,
    lipschitz_constant,
    make_hamiltonian,
    sample,
    sample_2d,
    s_minus,
    s_minus_quadratic_2d,
    s_plus,
    s_plus_quadratic_2d,
    sup_convolution,
    t_min,
)


#! HELPERS


def brute_force(x: float, t: float, sign: int, n_fine: int = 5120):
    """Hopf-Lax value of cos(2 pi y) with L(q) = q^2 / 2 on a fine grid."""
    y = x - 0.5 + np.arange(n_fine + 1) / n_fine
    values = np.cos(2 * np.pi * y) - sign * (y - x) ** 2 / (2 * t)
    return np.max(values) if sign > 0 else np.min(values)


def random_pair(seed: int, n: int = 64):
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid1D(n)
    return GridFn(grid, rng.standard_normal(n)), GridFn(grid, rng.standard_normal(n))


#! TESTS


def test_default_slope_range(cos512):
    assert default_slope_range(cos512) == pytest.approx(1.25 * lipschitz_constant(cos512))
    const = sample(lambda x: 1.0, PeriodicGrid1D(16))
    assert default_slope_range(const) == 1.0


def test_t_min(quadratic):
    assert t_min(1 / 512, quadratic) == pytest.approx(4 / (512 * 8))
    assert t_min(0.01, make_hamiltonian("abs", P=3.0)) == pytest.approx(0.04)


@pytest.mark.parametrize("operator", [s_plus, s_minus])
def test_constants_are_exact(quadratic, operator):
    u0 = sample(lambda x: 0.7, PeriodicGrid1D(128))
    assert_array_equal(operator(u0, quadratic, 0.3).values, 0.7)


def test_s_plus_brute_force(cos512, quadratic):
    u = s_plus(cos512, quadratic, 0.1)
    assert abs(u.values[256] - brute_force(0.5, 0.1, 1)) < 2e-3
    assert abs(u.values[100] - brute_force(100 / 512, 0.1, 1)) < 2e-3


def test_s_minus_brute_force(cos512, quadratic):
    u = s_minus(cos512, quadratic, 0.1)
    assert abs(u.values[0] - brute_force(0.0, 0.1, -1)) < 2e-3
    assert abs(u.values[300] - brute_force(300 / 512, 0.1, -1)) < 2e-3


def test_semigroup(cos512, quadratic):
    twice = s_plus(s_plus(cos512, quadratic, 0.1), quadratic, 0.1)
    once = s_plus(cos512, quadratic, 0.2)
    assert np.max(np.abs(twice.values - once.values)) <= 5 * cos512.h


def test_duality_for_even_hamiltonian(cos512, quadratic):
    minus = s_minus(cos512, quadratic, 0.1)
    plus = s_plus(-cos512, quadratic, 0.1)
    assert_allclose(minus.values, -plus.values, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_contraction(quadratic, seed):
    u0, v0 = random_pair(seed)
    u = s_plus(u0, quadratic, 0.1)
    v = s_plus(v0, quadratic, 0.1)
    assert np.max(u.values - v.values) <= np.max(u0.values - v0.values) + 1e-12
    u = s_minus(u0, quadratic, 0.1)
    v = s_minus(v0, quadratic, 0.1)
    assert np.max(u.values - v.values) <= np.max(u0.values - v0.values) + 1e-12


def test_max_min_and_lipschitz_monotone(cos512, sawtooth512, quadratic):
    for u0 in [cos512, sawtooth512]:
        for t in [0.01, 0.1, 0.5]:
            u = s_plus(u0, quadratic, t)
            assert u.max() <= u0.max()
            assert u.min() >= u0.min()
            assert lipschitz_constant(u) <= lipschitz_constant(u0) + 4 * u0.h
            v = s_minus(u0, quadratic, t)
            assert v.max() <= u0.max()
            assert v.min() >= u0.min()


def test_increment_too_small(cos512, quadratic):
    with pytest.raises(IncrementTooSmall, match="increment too small"):
        s_plus(cos512, quadratic, 1e-4)
    with pytest.raises(ValueError):
        s_plus(cos512, quadratic, -0.1)


def test_apply_flow_dispatch(cos512, quadratic):
    assert_array_equal(apply_flow(cos512, quadratic, 0.1).values, s_plus(cos512, quadratic, 0.1).values)
    assert_array_equal(apply_flow(cos512, quadratic, -0.1).values, s_minus(cos512, quadratic, 0.1).values)
    assert apply_flow(cos512, quadratic, 0.0) is cos512


def test_sup_convolution_closed_form(cos512, quadratic):
    t = 0.1
    exact = sup_convolution(
        values=cos512.values,
        h=cos512.h,
        t=t,
        conjugate=lambda q: 0.5 * q**2,
        q_range=quadratic.velocity_range,
        sign=1,
        optimal=lambda s: (s, 0.5 * s**2),
    )
    table = s_plus(cos512, quadratic, t).values
    assert np.max(np.abs(exact - table)) <= t * quadratic.tol_conj + 1e-12


def test_abs_is_windowed_extremum():
    grid = PeriodicGrid1D(64, 2.0)
    rng = np.random.default_rng(5)
    u0 = GridFn(grid, rng.standard_normal(64))
    H = make_hamiltonian("abs", P=1.0)
    t = 5 * grid.h
    up = s_plus(u0, H, t).values
    dn = s_minus(u0, H, t).values
    for i in range(64):
        window = u0.values[np.arange(i - 5, i + 6) % 64]
        assert up[i] == np.max(window)
        assert dn[i] == np.min(window)


def test_abs_semigroup_and_morphology():
    grid = PeriodicGrid1D(128, 2.0)
    rng = np.random.default_rng(8)
    u0 = GridFn(grid, rng.standard_normal(128))
    H = make_hamiltonian("abs", P=1.0)
    a, b = 4 * grid.h, 7 * grid.h
    composed = s_plus(s_plus(u0, H, a), H, b)
    assert_array_equal(composed.values, s_plus(u0, H, a + b).values)
    t = 6 * grid.h
    opening = s_plus(s_minus(u0, H, t), H, t)
    closing = s_minus(s_plus(u0, H, t), H, t)
    assert np.all(opening.values <= u0.values)
    assert np.all(u0.values <= closing.values)


def test_abs_wide_window_is_constant():
    grid = PeriodicGrid1D(256, 2.0)
    u0 = sample(lambda x: 1 - abs(x - 1), grid)
    H = make_hamiltonian("abs", P=1.0)
    assert_array_equal(s_plus(u0, H, 2.0).values, 1.0)
    assert_array_equal(s_minus(u0, H, 2.0).values, 0.0)


def test_linear_is_translation(cos512):
    H = make_hamiltonian("linear", {"v": 2.0}, P=1.0)
    t = 16 * cos512.h / 2.0
    u = s_plus(cos512, H, t)
    assert_allclose(u.values, np.roll(cos512.values, -16), atol=1e-12)
    v = s_minus(cos512, H, t)
    assert_allclose(v.values, np.roll(cos512.values, 16), atol=1e-12)


def test_gridfn2d_validation():
    with pytest.raises(ValueError):
        GridFn2D(np.zeros(10))
    with pytest.raises(ValueError):
        GridFn2D(np.full((8, 8), np.nan))


def test_2d_constant():
    Q = QuadraticHamiltonian2D(0.5, 0.0, 0.5)
    u0 = sample_2d(lambda x, y: 0.3 + 0 * x, 32, 32)
    assert_array_equal(s_plus_quadratic_2d(u0, Q, 0.05, P=2.0).values, 0.3)
    assert_array_equal(s_minus_quadratic_2d(u0, Q, 0.05, P=2.0).values, 0.3)


def test_2d_separable():
    a, b, t, P = 0.5, 1.0, 0.05, 2.0
    Q = QuadraticHamiltonian2D(a, 0.0, b)
    n = 32
    f = lambda x: np.cos(2 * np.pi * x)
    g = lambda y: 0.5 * np.sin(2 * np.pi * y) ** 3
    u0 = sample_2d(lambda x, y: f(x) + g(y), n, n)
    u = s_plus_quadratic_2d(u0, Q, t, P)

    h = 1 / n
    r = int(np.floor(t * Q.max_speed(P) / h + 1e-9))
    q_range = (-r * h / t, r * h / t)
    nodes = np.arange(n) * h
    fx = sup_convolution(f(nodes), h, t, lambda q: q**2 / (4 * a), q_range, 1)
    gy = sup_convolution(g(nodes), h, t, lambda q: q**2 / (4 * b), q_range, 1)
    assert_allclose(u.values, fx[:, None] + gy[None, :], rtol=0, atol=1e-12)


def test_2d_brute_force():
    Q = QuadraticHamiltonian2D(0.5, 0.0, 0.5)
    t = 0.05
    func = lambda x, y: np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
    u0 = sample_2d(func, 64, 64)
    u = s_plus_quadratic_2d(u0, Q, t)
    fine = (np.arange(257) - 128) / 256
    d1, d2 = np.meshgrid(fine, fine, indexing="ij")
    for i, j in [(0, 0), (10, 20), (32, 5), (50, 50)]:
        x, y = i / 64, j / 64
        oracle = np.max(func(x + d1, y + d2) - (d1**2 + d2**2) / (2 * t))
        assert abs(u.values[i, j] - oracle) < 5e-3


def test_2d_refusals():
    Q = QuadraticHamiltonian2D(0.5, 0.0, 0.5)
    u0 = sample_2d(lambda x, y: np.cos(2 * np.pi * x) + 0 * y, 32, 32)
    with pytest.raises(WindowTooLarge, match="increment too large for torus"):
        s_plus_quadratic_2d(u0, Q, 1.0, P=2.0)
    with pytest.raises(IncrementTooSmall):
        s_plus_quadratic_2d(u0, Q, 1e-4, P=2.0)
    big = GridFn2D(np.zeros((256, 256)))
    with pytest.raises(ValueError):
        s_plus_quadratic_2d(big, Q, 0.1, P=2.0)


def test_wide_window_folds_offsets():
    rng = np.random.default_rng(3)
    values = rng.standard_normal(16)
    h, t, q_range = 1 / 16, 2.0, (-3.0, 3.0)
    conj = lambda q: 0.5 * q**2
    offsets = np.arange(int(np.ceil(-3.0 * t / h - 1e-9)), int(np.floor(3.0 * t / h + 1e-9)) + 1)
    assert len(offsets) > 16
    up = np.max([np.roll(values, -j) - t * conj(j * h / t) for j in offsets], axis=0)
    dn = np.min([np.roll(values, j) + t * conj(j * h / t) for j in offsets], axis=0)
    assert_array_equal(sup_convolution(values, h, t, conj, q_range, 1), up)
    assert_array_equal(sup_convolution(values, h, t, conj, q_range, -1), dn)


def test_linear_pieces_are_exact(sawtooth512):
    # slopes +-1 are table nodes, so H'(1) and L(1) are exact
    H = make_hamiltonian("quadratic", {"a": 1.0}, P=2.0, m=4096)
    h = sawtooth512.h
    t = 51.5 * h
    u = s_plus(sawtooth512, H, t).values
    x = sawtooth512.grid.nodes
    lines = np.abs(x - 0.5) >= t + h
    cap = np.abs(x - 0.5) <= t - h
    assert_allclose(u[lines], sawtooth512.values[lines] + t / 2, rtol=0, atol=1e-12)
    assert_allclose(u[cap], 0.5 - (x[cap] - 0.5) ** 2 / (2 * t), rtol=0, atol=1e-7)

    # the optimum lies half way between two nodes
    nodes = sup_convolution(
        sawtooth512.values, h, t, H.conjugate, H.velocity_range, 1
    )
    assert np.max(sawtooth512.values[lines] + t / 2 - nodes[lines]) > 1e-6
    assert np.all(nodes <= u + 1e-12)


def test_s_minus_linear_pieces_are_exact(sawtooth512):
    H = make_hamiltonian("quadratic", {"a": 1.0}, P=2.0, m=4096)
    h = sawtooth512.h
    t = 51.5 * h
    u = s_minus(sawtooth512, H, t).values
    x = sawtooth512.grid.nodes
    d = np.minimum(x, 1 - x)
    lines = d >= t + h
    cap = d <= t - h
    assert_allclose(u[lines], sawtooth512.values[lines] - t / 2, rtol=0, atol=1e-12)
    assert_allclose(u[cap], d[cap] ** 2 / (2 * t), rtol=0, atol=1e-7)
