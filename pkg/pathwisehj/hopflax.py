# HOPFLAX MODULE


#! IMPORTS


import logging
from typing import Callable
import numpy as np
import pandas as pd
import scipy.ndimage as sn
from .conjugate import Hamiltonian, QuadraticHamiltonian2D
from .grid1d import GridFn, lipschitz_constant
from .utils import FLOAT_FORMAT, IncrementTooSmall, WindowTooLarge


__all__ = [
    "GridFn2D",
    "sample_2d",
    "default_slope_range",
    "t_min",
    "sup_convolution",
    "s_plus",
    "s_minus",
    "apply_flow",
    "s_plus_quadratic_2d",
    "s_minus_quadratic_2d",
]


logger = logging.getLogger(__name__)


#! CONSTANTS


# minimum number of cells a window must cover
MIN_WINDOW_CELLS = 4

# largest 2D grid accepted by the brute force operator
MAX_CELLS_2D = 128 * 128

# slope range safety factor over the Lipschitz constant of the datum
SLOPE_SAFETY = 1.25


#! CLASSES


class GridFn2D:
    """
    real valued function sampled on a uniform doubly periodic grid.

    Parameters
    ----------
    values: 2D array-like
        the n1 x n2 node values, values[i, j] at (i * h1, j * h2).

    period1, period2: float
        the periods along the two axes.
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(self, values, period1: float = 1.0, period2: float = 1.0):
        arr = np.array(values, dtype=float)
        if arr.ndim != 2:
            raise ValueError("values must be a 2D array.")
        if min(arr.shape) < 8:
            raise ValueError("each axis must have at least 8 cells.")
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite.")
        if not (period1 > 0 and period2 > 0):
            raise ValueError("periods must be positive.")
        arr.setflags(write=False)
        self._values = arr
        self._period1 = float(period1)
        self._period2 = float(period2)

    # ****** PROPERTIES ****** #

    @property
    def values(self):
        """the (read-only) node values."""
        return self._values

    @property
    def n1(self):
        """cells along the first axis."""
        return self._values.shape[0]

    @property
    def n2(self):
        """cells along the second axis."""
        return self._values.shape[1]

    @property
    def period1(self):
        """period along the first axis."""
        return self._period1

    @property
    def period2(self):
        """period along the second axis."""
        return self._period2

    @property
    def h1(self):
        """spacing along the first axis."""
        return self._period1 / self.n1

    @property
    def h2(self):
        """spacing along the second axis."""
        return self._period2 / self.n2

    @property
    def h(self):
        """the largest spacing."""
        return max(self.h1, self.h2)

    # ****** METHODS ****** #

    def __repr__(self):
        return f"GridFn2D({self.n1}x{self.n2}, max={self.max():.6g}, min={self.min():.6g})"

    def max(self):
        """the maximum node value."""
        return float(np.max(self._values))

    def min(self):
        """the minimum node value."""
        return float(np.min(self._values))

    def sup_norm(self):
        """the maximum absolute node value."""
        return float(np.max(np.abs(self._values)))

    def with_values(self, values):
        """return a new GridFn2D on the same grid."""
        return GridFn2D(values, self._period1, self._period2)

    def gradient_norm(self):
        """
        the largest Euclidean norm of the forward difference gradient.
        """
        v = self._values
        g1 = (np.roll(v, -1, axis=0) - v) / self.h1
        g2 = (np.roll(v, -1, axis=1) - v) / self.h2
        return float(np.max(np.sqrt(g1**2 + g2**2)))

    def to_frame(self):
        """return the function as a long pandas.DataFrame (x, y, value)."""
        x = np.arange(self.n1) * self.h1
        y = np.arange(self.n2) * self.h2
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return pd.DataFrame(
            {
                "x": xx.flatten(),
                "y": yy.flatten(),
                "value": self._values.flatten(),
            }
        )

    def to_csv(self, path: str):
        """write the function to path with header 'x,y,value'."""
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)


#! FUNCTIONS


def sample_2d(
    f: Callable,
    n1: int,
    n2: int,
    period1: float = 1.0,
    period2: float = 1.0,
):
    """
    sample a closed form function f(x, y) on a doubly periodic grid.
    f must broadcast over numpy arrays.
    """
    x = np.arange(n1) * (period1 / n1)
    y = np.arange(n2) * (period2 / n2)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    values = np.broadcast_to(np.asarray(f(xx, yy), dtype=float), xx.shape)
    return GridFn2D(values, period1, period2)


def default_slope_range(
    u: GridFn | GridFn2D,
    safety: float = SLOPE_SAFETY,
    minimum: float = 1.0,
):
    """
    the slope half-range P the solvers never exceed: the Lipschitz constant
    of the datum times a safety factor, floored at minimum.
    """
    if isinstance(u, GridFn2D):
        lip = u.gradient_norm()
    else:
        lip = lipschitz_constant(u)
    return float(max(safety * lip, minimum))


def t_min(h: float, H: Hamiltonian):
    """
    the smallest increment whose window covers MIN_WINDOW_CELLS cells.
    """
    speed = 1.0 if H.kind == "abs" else H.max_speed
    if speed <= 0:
        return 0.0
    return MIN_WINDOW_CELLS * h / speed


def sup_convolution(
    values: np.ndarray,
    h: float,
    t: float,
    conjugate: Callable,
    q_range: tuple,
    sign: int = 1,
    optimal: Callable | None = None,
):
    """
    windowed Hopf-Lax kernel on a periodic 1D grid.

    Parameters
    ----------
    values: 1D array
        the node values of the datum.

    h: float
        the grid spacing.

    t: float
        the (positive) increment.

    conjugate: callable
        the convex conjugate L, evaluated on arrays of velocities.

    q_range: tuple
        the velocity range [lo, hi] spanned by the window.

    sign: int
        +1 for max_j [u(x + jh) - t L(jh / t)],
        -1 for min_j [u(x - jh) + t L(jh / t)].

    optimal: callable | None
        maps cell slopes s to the velocities q in q_range maximizing
        s q - L(q) and to L there. When given, the optimum of each cell of
        the piecewise linear interpolant is a candidate too, and the result
        is the exact Hopf-Lax value of the interpolant over the window.
        Otherwise only the nodes are candidates.

    Returns
    -------
    out: 1D array
        the convolved node values.

    Notes
    -----
    offsets are not reduced modulo the period before being weighted, so the
    kernel acts on the periodic extension of the datum over R. A window
    wider than half a period is therefore accepted in 1D (the 2D operator
    refuses it). Offsets congruent modulo n read the same node, so only the
    cheapest of each class is kept and the cost of a call never exceeds
    n shifts.
    """
    lo, hi = q_range
    j_lo = int(np.ceil(lo * t / h - 1e-9))
    j_hi = int(np.floor(hi * t / h + 1e-9))
    if j_hi < j_lo:
        raise ValueError("the velocity range spans no grid offset.")
    n = len(values)
    offsets = np.arange(j_lo, j_hi + 1)
    costs = t * np.asarray(conjugate(offsets * h / t), dtype=float)
    if len(offsets) > n:
        folded = np.full(n, np.inf)
        np.minimum.at(folded, offsets % n, costs)
        offsets, costs = np.arange(n), folded
    if sign > 0:
        out = np.full(values.shape, -np.inf)
        for j, c in zip(offsets, costs):
            np.maximum(out, np.roll(values, -j) - c, out=out)
    else:
        out = np.full(values.shape, np.inf)
        for j, c in zip(offsets, costs):
            np.minimum(out, np.roll(values, j) + c, out=out)
    if optimal is None:
        return out

    # one interior candidate per cell, credited to the node it serves
    slopes = (np.roll(values, -1) - values) / h
    q, lq = optimal(slopes)
    d = t * np.asarray(q, dtype=float)
    cells = np.arange(n)
    if sign > 0:
        k = np.floor(d / h)
        cand = values + slopes * (d - k * h) - t * lq
        np.maximum.at(out, (cells - k.astype(int)) % n, cand)
    else:
        k = np.ceil(d / h)
        cand = values + slopes * (k * h - d) + t * lq
        np.minimum.at(out, (cells + k.astype(int)) % n, cand)
    return out


def _translate(u: GridFn, d: float):
    """
    periodic linear interpolation of u at x + d.
    """
    grid = u.grid
    x = np.append(grid.nodes, grid.period)
    v = np.append(u.values, u.values[0])
    return np.interp((grid.nodes + d) % grid.period, x, v)


def _check_increment(u: GridFn, H: Hamiltonian, t: float):
    txt = "u0 must be a GridFn instance."
    assert isinstance(u, GridFn), txt
    assert isinstance(H, Hamiltonian), "H must be a Hamiltonian instance."
    if not (np.isfinite(t) and t > 0):
        raise ValueError(f"t must be a positive real (got {t}).")
    tm = t_min(u.h, H)
    if t < tm * (1 - 1e-12):
        msg = f"increment too small for grid: t={t:.6g} < t_min={tm:.6g}; "
        raise IncrementTooSmall(msg + "merge consecutive increments.")


def _hopf_lax(u: GridFn, H: Hamiltonian, t: float, sign: int):
    _check_increment(u, H, t)
    if H.kind == "abs":
        r = int(np.floor(t / u.h + 1e-9))
        size = 2 * r + 1
        if size >= u.grid.n:
            const = u.max() if sign > 0 else u.min()
            return u.with_values(np.full(u.grid.n, const))
        if sign > 0:
            out = sn.maximum_filter1d(u.values, size=size, mode="wrap")
        else:
            out = sn.minimum_filter1d(u.values, size=size, mode="wrap")
        return u.with_values(out)
    if H.kind == "linear":
        v = H.velocity_range[0]
        return u.with_values(_translate(u, sign * v * t))
    out = sup_convolution(
        values=u.values,
        h=u.h,
        t=t,
        conjugate=lambda q: H.conjugate(q, warn=False),
        q_range=H.velocity_range,
        sign=sign,
        optimal=H.optimal_velocity,
    )
    return u.with_values(out)


def s_plus(u0: GridFn, H: Hamiltonian, t: float):
    """
    solution operator of u_t = H(u_x) over an increment t:

        u(x, t) = max_y [u0(y) - t L((y - x) / t)],

    with u0 the piecewise linear interpolant of its nodes and y within the
    finite speed window.

    Parameters
    ----------
    u0: GridFn
        the datum.

    H: Hamiltonian
        the convex Hamiltonian.

    t: float
        the increment, t >= t_min(h, H).

    Returns
    -------
    u: GridFn
        the solution after the increment.

    Raises
    ------
    IncrementTooSmall
        if t < t_min.
    """
    return _hopf_lax(u0, H, t, 1)


def s_minus(u0: GridFn, H: Hamiltonian, t: float):
    """
    solution operator of u_t = -H(u_x) over an increment t:

        u(x, t) = min_y [u0(y) + t L((x - y) / t)].

    See s_plus for the arguments.
    """
    return _hopf_lax(u0, H, t, -1)


def apply_flow(u0: GridFn, H: Hamiltonian, increment: float):
    """
    apply s_plus (increment > 0) or s_minus (increment < 0) with |increment|.
    A zero increment returns u0.
    """
    if increment > 0:
        return s_plus(u0, H, increment)
    if increment < 0:
        return s_minus(u0, H, -increment)
    return u0


def _hopf_lax_2d(
    u0: GridFn2D,
    Q: QuadraticHamiltonian2D,
    t: float,
    sign: int,
    P: float | None,
):
    assert isinstance(u0, GridFn2D), "u0 must be a GridFn2D instance."
    txt = "Q must be a QuadraticHamiltonian2D instance."
    assert isinstance(Q, QuadraticHamiltonian2D), txt
    if u0.n1 * u0.n2 > MAX_CELLS_2D:
        raise ValueError("the 2D brute force operator accepts at most 128x128.")
    if not (np.isfinite(t) and t > 0):
        raise ValueError(f"t must be a positive real (got {t}).")
    if P is None:
        P = default_slope_range(u0)
    speed = Q.max_speed(P)
    tm = MIN_WINDOW_CELLS * min(u0.h1, u0.h2) / speed
    if t < tm * (1 - 1e-12):
        msg = f"increment too small for grid: t={t:.6g} < t_min={tm:.6g}."
        raise IncrementTooSmall(msg)
    r1 = int(np.floor(t * speed / u0.h1 + 1e-9))
    r2 = int(np.floor(t * speed / u0.h2 + 1e-9))
    if r1 * u0.h1 > 0.5 * u0.period1 or r2 * u0.h2 > 0.5 * u0.period2:
        raise WindowTooLarge("increment too large for torus.")

    v = u0.values
    if sign > 0:
        out = np.full(v.shape, -np.inf)
    else:
        out = np.full(v.shape, np.inf)
    for j1 in range(-r1, r1 + 1):
        for j2 in range(-r2, r2 + 1):
            q = np.array([j1 * u0.h1 / t, j2 * u0.h2 / t])
            cost = t * float(Q.conjugate(q))
            if sign > 0:
                rolled = np.roll(v, (-j1, -j2), axis=(0, 1))
                np.maximum(out, rolled - cost, out=out)
            else:
                rolled = np.roll(v, (j1, j2), axis=(0, 1))
                np.minimum(out, rolled + cost, out=out)
    logger.debug("2D Hopf-Lax: t=%.6g window=(%d, %d)", t, r1, r2)
    return u0.with_values(out)


def s_plus_quadratic_2d(
    u0: GridFn2D,
    Q: QuadraticHamiltonian2D,
    t: float,
    P: float | None = None,
):
    """
    2D solution operator of u_t = (A Du, Du):

        u(x, t) = max_y [u0(y) - t (A^-1 (y - x) / t, (y - x) / t) / 4],

    evaluated by brute force over a rectangular window of grid nodes.

    Parameters
    ----------
    u0: GridFn2D
        the datum (at most 128 x 128).

    Q: QuadraticHamiltonian2D
        the Hamiltonian.

    t: float
        the increment.

    P: float | None
        the slope bound defining the window. By default it is
        default_slope_range(u0).

    Raises
    ------
    WindowTooLarge
        if the window exceeds half a period.
    """
    return _hopf_lax_2d(u0, Q, t, 1, P)


def s_minus_quadratic_2d(
    u0: GridFn2D,
    Q: QuadraticHamiltonian2D,
    t: float,
    P: float | None = None,
):
    """
    mirror of s_plus_quadratic_2d solving u_t = -(A Du, Du).
    """
    return _hopf_lax_2d(u0, Q, t, -1, P)
