#! IMPORTS


import numpy as np
import pytest
from numpy.testing import assert_allclose
from pathwisehj import (
    ConjugateRangeWarning,
    Hamiltonian,
    NotUniformlyConvexError,
    QuadraticHamiltonian2D,
    conjugate_quadratic_2d,
    estimate_convexity_bounds,
    legendre_conjugate,
    make_hamiltonian,
    slope_grid,
)


#! CONSTANTS


P = 2.0
M = 1024
TOL = 2 * (2 * P / M) ** 2


#! TESTS


def test_slope_grid_has_zero_node():
    p = slope_grid(P, M)
    assert len(p) == M + 1
    assert p[M // 2] == 0.0
    assert_allclose(p[[0, -1]], [-P, P])


@pytest.mark.parametrize("a,q,expected", [(1.0, 1.0, 0.5), (2.0, 1.0, 0.25), (1.0, -1.5, 1.125)])
def test_legendre_conjugate_quadratic(a, q, expected):
    p = slope_grid(P, M)
    conj = legendre_conjugate(0.5 * a * p**2, p, [q])
    assert abs(conj[0] - expected) <= TOL


def test_legendre_conjugate_matches_brute_force():
    p = slope_grid(P, M)
    values = 0.5 * p**2 + 0.25 * p**4
    q = np.linspace(-5, 5, 41)
    brute = np.max(p[:, None] * q[None, :] - values[:, None], axis=0)
    assert_allclose(legendre_conjugate(values, p, q), brute, rtol=0, atol=1e-12)


def test_legendre_conjugate_affine_is_indicator():
    p = slope_grid(P, M)
    assert abs(legendre_conjugate(p, p, [1.0])[0]) < 1e-12
    with pytest.warns(ConjugateRangeWarning):
        _, clamped = legendre_conjugate(p, p, [0.5], return_mask=True)
    assert clamped[0]


@pytest.mark.parametrize("a,expected", [(1.0, 1.0), (0.5, 0.5)])
def test_convexity_bounds_quadratic(a, expected):
    theta, Theta = estimate_convexity_bounds(lambda p: 0.5 * a * p**2, 1.0, M)
    assert_allclose([theta, Theta], [expected, expected], rtol=1e-9)


def test_convexity_bounds_quartic():
    theta, Theta = estimate_convexity_bounds(lambda p: p**2 + p**4, 1.0, M)
    assert_allclose(theta, 2.0, rtol=0.01)
    assert_allclose(Theta, 14.0, rtol=0.01)


def test_convexity_bounds_refuse_affine():
    with pytest.raises(NotUniformlyConvexError, match="not uniformly convex"):
        estimate_convexity_bounds(lambda p: 3 * p + 1, 1.0, M)


def test_convexity_bounds_need_samples():
    with pytest.raises(ValueError):
        estimate_convexity_bounds(lambda p: p**2, 1.0, 16)


def test_hamiltonian_quadratic_table():
    H = make_hamiltonian("quadratic", {"a": 1.0}, P=P, m=M)
    assert not H.degenerate_convexity
    assert_allclose([H.theta, H.Theta], [1.0, 1.0], rtol=1e-9)
    assert_allclose(H.velocity_range, [-P, P], rtol=1e-12)
    assert H.max_speed == pytest.approx(P)
    assert H.h0 == 0.0
    q = np.linspace(-1.9, 1.9, 77)
    assert np.max(np.abs(H.conjugate(q) - 0.5 * q**2)) <= TOL
    assert H.conjugate(0.0) == 0.0


def test_biconjugate_recovers_hamiltonian():
    H = make_hamiltonian("quadratic", {"a": 1.0}, P=P, m=M)
    assert np.max(np.abs(H.biconjugate() - H(H.slopes))) <= TOL


def test_fenchel_young():
    H = make_hamiltonian("quartic", {"a": 1.0, "b": 1.0}, P=1.5, m=M)
    assert H.fenchel_young_gap() >= -H.tol_conj
    rng = np.random.default_rng(3)
    p = rng.uniform(-1.5, 1.5, 200)
    lo, hi = H.velocity_range
    q = rng.uniform(lo, hi, 200)
    assert np.all(p * q <= H(p) + H.conjugate(q) + H.tol_conj + 1e-12)


def test_second_derivative_table():
    H = make_hamiltonian("quartic", {"a": 1.0, "b": 1.0}, P=1.0, m=M)
    assert_allclose(H.second_derivative([0.0, 0.5]), [1.0, 1.75], rtol=1e-3)


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_optimal_velocity(a):
    H = make_hamiltonian("quadratic", {"a": a}, P=P, m=M)
    s = np.array([0.5, 1.0, -1.5, 0.0])
    q, L = H.optimal_velocity(s)
    assert_allclose(q, a * s, rtol=0, atol=1e-12)
    assert_allclose(L, q**2 / (2 * a), rtol=0, atol=1e-12)
    q, _ = H.optimal_velocity(np.array([-3.0, 3.0]))
    assert_allclose(q, H.velocity_range)


def test_conjugate_warns_outside_range():
    H = make_hamiltonian("quadratic", {"a": 1.0}, P=1.0, m=256)
    with pytest.warns(ConjugateRangeWarning):
        H.conjugate(3.0)


def test_degenerate_hamiltonians():
    A = make_hamiltonian("abs", P=1.0)
    assert A.kind == "abs"
    assert A.degenerate_convexity
    assert A.theta == 0.0
    lin = make_hamiltonian("linear", {"v": 2.0}, P=1.0)
    assert lin.degenerate_convexity
    assert_allclose(lin.velocity_range, [2.0, 2.0])
    assert_allclose(lin.conjugate(2.0), 0.0, atol=1e-12)


def test_nonconvex_is_refused():
    with pytest.raises(NotUniformlyConvexError):
        Hamiltonian(lambda p: -(p**2), 1.0, allow_degenerate=True)


@pytest.mark.parametrize(
    "name,params",
    [("cubic", {}), ("quadratic", {}), ("quadratic", {"a": -1.0}), ("linear", {"w": 1.0})],
)
def test_factory_validation(name, params):
    with pytest.raises(ValueError):
        make_hamiltonian(name, params)


def test_odd_sample_count_is_refused():
    with pytest.raises(ValueError):
        Hamiltonian(lambda p: p**2, 1.0, m=1023)


@pytest.mark.parametrize(
    "A,q,expected",
    [
        ((0.5, 0.0, 0.5), (1.0, 0.0), 0.5),
        ((1.0, 0.0, 2.0), (2.0, 2.0), 1.5),
        ((1.0, 0.3, 2.0), (0.0, 0.0), 0.0),
    ],
)
def test_conjugate_quadratic_2d(A, q, expected):
    Q = QuadraticHamiltonian2D(*A)
    assert_allclose(conjugate_quadratic_2d(Q, np.array(q)), expected, rtol=1e-12)


def test_conjugate_quadratic_2d_brute_force():
    Q = QuadraticHamiltonian2D(1.0, 0.0, 2.0)
    g = np.linspace(-3, 3, 601)
    p1, p2 = np.meshgrid(g, g, indexing="ij")
    p = np.stack([p1, p2], axis=-1)
    brute = np.max(2 * p1 + 2 * p2 - Q(p))
    assert abs(brute - 1.5) < 1e-3


def test_quadratic_2d_properties():
    Q = QuadraticHamiltonian2D(0.5, 0.0, 1.0)
    assert_allclose(Q.F @ Q.F, 2 * Q.A, atol=1e-12)
    assert_allclose([Q.theta, Q.Theta], [1.0, 2.0])
    assert_allclose(Q.A @ Q.A_inv, np.eye(2), atol=1e-12)
    assert Q.max_speed(3.0) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        QuadraticHamiltonian2D(1.0, 2.0, 1.0)
