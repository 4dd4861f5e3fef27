# GRID1D MODULE


#! IMPORTS


from typing import Callable
import numpy as np
import pandas as pd
from .utils import FLOAT_FORMAT


__all__ = [
    "PeriodicGrid1D",
    "GridFn",
    "sample",
    "shift",
    "gradient_forward",
    "centered_gradient",
    "second_difference",
    "oscillation",
    "lipschitz_constant",
]


#! CONSTANTS


MIN_CELLS = 8


#! CLASSES


class PeriodicGrid1D:
    """
    uniform grid on the 1D torus [0, period).

    Parameters
    ----------
    n: int
        the number of cells (and nodes). Nodes are the left end points of
        the cells, i.e. x_i = i * h with h = period / n.

    period: float
        the length of the torus.
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(self, n: int, period: float = 1.0):
        txt = "{} must be an object of class {}."
        assert isinstance(n, (int, np.integer)), txt.format("n", "int")
        msg = txt.format("period", "(int, float)")
        assert isinstance(period, (int, float, np.floating)), msg
        if n < MIN_CELLS:
            raise ValueError(f"n must be >= {MIN_CELLS} (got n={n}).")
        if not np.isfinite(period) or period <= 0:
            raise ValueError(f"period must be a positive real (got {period}).")
        self._n = int(n)
        self._period = float(period)

    # ****** PROPERTIES ****** #

    @property
    def n(self):
        """the number of nodes."""
        return self._n

    @property
    def period(self):
        """the length of the torus."""
        return self._period

    @property
    def h(self):
        """the grid spacing."""
        return self._period / self._n

    @property
    def nodes(self):
        """the node coordinates x_i = i * h."""
        return np.arange(self._n) * self.h

    # ****** METHODS ****** #

    def __eq__(self, other):
        if not isinstance(other, PeriodicGrid1D):
            return NotImplemented
        return self._n == other._n and self._period == other._period

    def __hash__(self):
        return hash((self._n, self._period))

    def __repr__(self):
        return f"PeriodicGrid1D(n={self._n}, period={self._period!r})"

    def to_dict(self):
        """return a JSON-ready description of the grid."""
        return {"n": self._n, "period": self._period}


class GridFn:
    """
    real valued function sampled on the nodes of a PeriodicGrid1D.

    Parameters
    ----------
    grid: PeriodicGrid1D
        the grid the function lives on.

    values: array-like
        the n finite node values. They are copied and frozen.
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(self, grid: PeriodicGrid1D, values):
        txt = "grid must be a PeriodicGrid1D instance."
        assert isinstance(grid, PeriodicGrid1D), txt
        arr = np.array(values, dtype=float).flatten()
        if arr.shape[0] != grid.n:
            msg = f"values must have exactly {grid.n} entries "
            raise ValueError(msg + f"(got {arr.shape[0]}).")
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite.")
        arr.setflags(write=False)
        self._grid = grid
        self._values = arr

    # ****** PROPERTIES ****** #

    @property
    def grid(self):
        """the grid of the function."""
        return self._grid

    @property
    def values(self):
        """the (read-only) node values."""
        return self._values

    @property
    def h(self):
        """the grid spacing."""
        return self._grid.h

    # ****** METHODS ****** #

    def __repr__(self):
        return f"GridFn({self._grid!r}, max={self.max():.6g}, min={self.min():.6g})"

    def __neg__(self):
        return GridFn(self._grid, -self._values)

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
        """return a new GridFn on the same grid."""
        return GridFn(self._grid, values)

    def to_frame(self):
        """return the function as a pandas.DataFrame with x, value columns."""
        return pd.DataFrame({"x": self._grid.nodes, "value": self._values})

    def to_csv(self, path: str):
        """
        write the function to path with header 'x,value' and
        17 significant digits.
        """
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)

    @classmethod
    def read_csv(cls, path: str, period: float | None = None):
        """
        read a GridFn written by to_csv.

        Parameters
        ----------
        path: str
            the csv file.

        period: float | None
            the grid period. If None, it is inferred from the node spacing.

        Returns
        -------
        u: GridFn
            the function stored in path.
        """
        frame = pd.read_csv(path)
        if list(frame.columns) != ["x", "value"]:
            raise ValueError(f"{path} must have the header 'x,value'.")
        x = frame["x"].to_numpy(dtype=float)
        n = len(x)
        if period is None:
            period = float(x[1] - x[0]) * n
        return cls(PeriodicGrid1D(n, period), frame["value"].to_numpy())


#! FUNCTIONS


def sample(f: Callable, grid: PeriodicGrid1D):
    """
    sample a closed form function on the grid nodes.

    Parameters
    ----------
    f: callable
        a real function of x. It is called node by node.

    grid: PeriodicGrid1D
        the sampling grid.

    Returns
    -------
    u: GridFn
        values[i] = f(x_i).
    """
    values = np.array([float(f(x)) for x in grid.nodes])
    if not np.all(np.isfinite(values)):
        bad = grid.nodes[~np.isfinite(values)]
        raise ValueError(f"f is not finite at the nodes {bad[:5]}.")
    return GridFn(grid, values)


def shift(u: GridFn, s: int):
    """
    translate u by s cells on the torus: result[i] = values[i - s].
    """
    return u.with_values(np.roll(u.values, int(s)))


def gradient_forward(u: GridFn):
    """
    forward difference quotient: (values[i+1] - values[i]) / h.
    """
    return u.with_values((np.roll(u.values, -1) - u.values) / u.h)


def centered_gradient(u: GridFn):
    """
    centered difference quotient: (values[i+1] - values[i-1]) / (2h).
    """
    v = u.values
    return u.with_values((np.roll(v, -1) - np.roll(v, 1)) / (2 * u.h))


def second_difference(u: GridFn):
    """
    second difference quotient:
    (values[i+1] - 2 values[i] + values[i-1]) / h^2.
    """
    v = u.values
    return u.with_values((np.roll(v, -1) - 2 * v + np.roll(v, 1)) / u.h**2)


def oscillation(u: GridFn):
    """
    max(values) - min(values).
    """
    return float(np.ptp(u.values))


def lipschitz_constant(u: GridFn):
    """
    the largest absolute forward difference quotient of u.
    """
    return float(np.max(np.abs(np.roll(u.values, -1) - u.values)) / u.h)
