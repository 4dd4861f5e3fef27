# PATHS MODULE


#! IMPORTS


import logging
import numpy as np
import pandas as pd
from .utils import FLOAT_FORMAT


__all__ = [
    "Path",
    "MonotoneSegment",
    "Skeleton",
    "piecewise_linear",
    "ramp",
    "running_extrema",
    "monotone_segments",
    "skeleton",
    "sample_brownian",
    "sup_distance",
]


logger = logging.getLogger(__name__)


#! CLASSES


class Path:
    """
    continuous driving signal zeta with zeta(0) = 0, stored as samples of
    its piecewise linear interpolant.

    Parameters
    ----------
    times: 1D array-like
        strictly increasing sample times starting at 0.

    values: 1D array-like
        the samples, values[0] = 0.

    provenance: dict | None
        how the path was obtained (e.g. the seed of a Brownian path).
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(self, times, values, provenance: dict | None = None):
        t = np.array(times, dtype=float).flatten()
        v = np.array(values, dtype=float).flatten()
        if len(t) != len(v):
            raise ValueError("times and values must have equal lengths.")
        if len(t) < 1:
            raise ValueError("a path needs at least one sample.")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("times and values must be finite.")
        if t[0] != 0 or v[0] != 0:
            raise ValueError("paths must start at (0, 0).")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing.")
        t.setflags(write=False)
        v.setflags(write=False)
        self._times = t
        self._values = v
        self._provenance = dict(provenance or {})

    # ****** PROPERTIES ****** #

    @property
    def times(self):
        """the sample times."""
        return self._times

    @property
    def values(self):
        """the sample values."""
        return self._values

    @property
    def T(self):
        """the last sample time."""
        return float(self._times[-1])

    @property
    def provenance(self):
        """a dict describing how the path was built."""
        return dict(self._provenance)

    # ****** METHODS ****** #

    def __call__(self, t):
        """evaluate the piecewise linear interpolant at t."""
        return np.interp(t, self._times, self._values)

    def __len__(self):
        return len(self._times)

    def __repr__(self):
        return f"Path(samples={len(self)}, T={self.T:g})"

    def __neg__(self):
        return Path(self._times, -self._values, self._provenance)

    def restrict(self, T: float):
        """
        return the path on [0, T]; a sample is added at T if needed.
        """
        if not 0 <= T <= self.T * (1 + 1e-12):
            raise ValueError(f"T must be in [0, {self.T:g}] (got {T}).")
        T = min(T, self.T)
        keep = self._times < T
        t = np.append(self._times[keep], T)
        v = np.append(self._values[keep], self(T))
        if T == 0:
            t, v = np.array([0.0]), np.array([0.0])
        return Path(t, v, self._provenance)

    def total_variation(self):
        """the total variation of the interpolant."""
        return float(np.sum(np.abs(np.diff(self._values))))

    def to_frame(self):
        """return the path as a pandas.DataFrame with t, zeta columns."""
        return pd.DataFrame({"t": self._times, "zeta": self._values})

    def to_csv(self, path: str):
        """write the path with header 't,zeta'."""
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)

    @classmethod
    def read_csv(cls, path: str):
        """read a Path written by to_csv."""
        frame = pd.read_csv(path)
        if list(frame.columns) != ["t", "zeta"]:
            raise ValueError(f"{path} must have the header 't,zeta'.")
        return cls(frame["t"].to_numpy(), frame["zeta"].to_numpy())


class MonotoneSegment:
    """
    maximal time interval where the path moves in one direction.

    Parameters
    ----------
    t_start, t_end: float
        the segment bounds.

    direction: str
        "up" or "down".

    increment: float
        |zeta(t_end) - zeta(t_start)| > 0.

    i_start, i_end: int
        the sample indices of the bounds.
    """

    def __init__(
        self,
        t_start: float,
        t_end: float,
        direction: str,
        increment: float,
        i_start: int = 0,
        i_end: int = 0,
    ):
        assert direction in ("up", "down"), "direction must be up or down."
        if not t_end > t_start:
            raise ValueError("t_end must be greater than t_start.")
        if not increment > 0:
            raise ValueError("increment must be positive.")
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.direction = direction
        self.increment = float(increment)
        self.i_start = int(i_start)
        self.i_end = int(i_end)

    @property
    def sign(self):
        """+1 for up, -1 for down."""
        return 1 if self.direction == "up" else -1

    @property
    def signed_increment(self):
        """zeta(t_end) - zeta(t_start)."""
        return self.sign * self.increment

    def __repr__(self):
        return "MonotoneSegment({}, [{:g}, {:g}], {:g})".format(
            self.direction, self.t_start, self.t_end, self.increment
        )


class Skeleton:
    """
    the reduced path through the successive extrema of a path.

    Parameters
    ----------
    reduced: Path
        the piecewise linear path through the extrema.

    tau: 1D array
        the extrema times (the nodes of reduced, T included).
    """

    def __init__(self, reduced: Path, tau):
        assert isinstance(reduced, Path), "reduced must be a Path instance."
        self.reduced = reduced
        self.tau = np.asarray(tau, dtype=float)

    def __repr__(self):
        return f"Skeleton(extrema={len(self.tau)}, T={self.reduced.T:g})"


#! FUNCTIONS


def piecewise_linear(points, provenance: dict | None = None):
    """
    build the Path through the given (t, v) points.

    Parameters
    ----------
    points: iterable of (t, v)
        the nodes, starting with (0, 0), times strictly increasing.

    Returns
    -------
    p: Path
        the piecewise linear path.
    """
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    if arr.shape[1] != 2:
        raise ValueError("points must be (t, v) pairs.")
    prov = {"kind": "points"} if provenance is None else provenance
    return Path(arr[:, 0], arr[:, 1], prov)


def ramp(slope: float, T: float):
    """
    the linear path zeta(t) = slope * t on [0, T].
    """
    prov = {"kind": "ramp", "slope": float(slope), "T": float(T)}
    return piecewise_linear([(0.0, 0.0), (T, slope * T)], prov)


def running_extrema(p: Path):
    """
    running maximum M(t) = max_{s<=t} zeta(s) and minimum m(t).

    Returns
    -------
    M, m: Path
        the running extrema on the sample times of p. They are exact for
        the interpolant since its extrema lie on the samples.
    """
    M = np.maximum.accumulate(p.values)
    m = np.minimum.accumulate(p.values)
    return Path(p.times, M), Path(p.times, m)


def monotone_segments(p: Path, merge_tol: float | None = None):
    """
    greedy decomposition of the path into maximal monotone runs.

    Parameters
    ----------
    p: Path
        the path.

    merge_tol: float | None
        reversals not exceeding merge_tol are merged into the surrounding
        run. By default 1e-12 * (M(T) - m(T)).

    Returns
    -------
    segments: list of MonotoneSegment
        alternating segments tiling [0, T] (empty for a constant path).
    """
    v = p.values
    t = p.times
    if merge_tol is None:
        merge_tol = 1e-12 * float(np.ptp(v))
    if merge_tol < 0:
        raise ValueError("merge_tol must be >= 0.")

    # first significant move
    moved = np.flatnonzero(np.abs(v - v[0]) > merge_tol)
    if len(moved) == 0:
        return []
    sign = 1 if v[moved[0]] > v[0] else -1

    # track the running extreme of the current run
    bounds = [(0, sign)]
    ext = int(moved[0])
    for i in range(int(moved[0]) + 1, len(v)):
        if sign * (v[i] - v[ext]) >= 0:
            ext = i
        elif sign * (v[ext] - v[i]) > merge_tol:
            bounds += [(ext, -sign)]
            sign = -sign
            ext = i

    # close the runs; a flat tail joins the last run
    out = []
    for k, (i0, sgn) in enumerate(bounds):
        i1 = bounds[k + 1][0] if k + 1 < len(bounds) else len(v) - 1
        out += [
            MonotoneSegment(
                t_start=t[i0],
                t_end=t[i1],
                direction="up" if sgn > 0 else "down",
                increment=abs(v[i1] - v[i0]),
                i_start=i0,
                i_end=i1,
            )
        ]
    return out


def _first_arg(values: np.ndarray, lo: int, hi: int, find_max: bool):
    """
    earliest index of the max (or min) of values[lo:hi].
    """
    chunk = values[lo:hi]
    k = np.argmax(chunk) if find_max else np.argmin(chunk)
    return lo + int(k)


def skeleton(p: Path, T: float | None = None):
    """
    reduce the path on [0, T] to the piecewise linear path through its
    successive extrema.

    Parameters
    ----------
    p: Path
        the path.

    T: float | None
        the final time (defaults to p.T).

    Returns
    -------
    sk: Skeleton
        the reduced path and the extrema times.

    Notes
    -----
    tau_0 is the last time zeta meets its running maximum or minimum.
    Forward from tau_0 the extrema alternate: the earliest argmin over the
    remaining horizon after a maximum, the earliest argmax after a minimum.
    Backward from tau_0 the same alternation runs in reverse time over
    [0, tau_i). Ties go to the earliest attaining time.
    """
    q = p.restrict(p.T if T is None else T)
    v = q.values
    n = len(v)
    M = np.maximum.accumulate(v)
    m = np.minimum.accumulate(v)
    hits = np.flatnonzero((v == M) | (v == m))
    i0 = int(hits[-1])

    # type of tau_0
    is_max = v[i0] == M[i0]
    is_min = v[i0] == m[i0]
    if is_max and is_min:
        rest = v[i0:]
        if np.ptp(rest) == 0:
            idx = [0, n - 1] if n > 1 else [0]
            return Skeleton(Path(q.times[idx], v[idx]), q.times[idx])
        is_max = abs(np.min(rest)) > abs(np.max(rest))

    # forward extrema
    forward = []
    i, find_max = i0, not is_max
    while i < n - 1:
        j = _first_arg(v, i + 1, n, find_max)
        if v[j] == v[i]:
            break
        forward += [j]
        i, find_max = j, not find_max

    # backward extrema
    backward = []
    i, find_max = i0, not is_max
    while i > 0:
        j = _first_arg(v, 0, i, find_max)
        if v[j] == v[i]:
            break
        backward += [j]
        i, find_max = j, not find_max

    idx = sorted(set([0] + backward + [i0] + forward + [n - 1]))
    reduced = Path(q.times[idx], v[idx], {"kind": "skeleton", **q.provenance})
    logger.debug("skeleton: %d samples reduced to %d extrema", n, len(idx))
    return Skeleton(reduced, q.times[idx])


def sample_brownian(seed: int, T: float, dt: float):
    """
    sample a standard Brownian path on [0, T] with step dt.

    Parameters
    ----------
    seed: int
        the seed of a per-path numpy Generator.

    T: float
        the horizon.

    dt: float
        the time step (0 < dt <= T). The last step is shortened if dt does
        not divide T.

    Returns
    -------
    p: Path
        cumulative sums of independent N(0, dt) increments.
    """
    assert isinstance(seed, (int, np.integer)), "seed must be an int."
    if not (0 < dt <= T):
        raise ValueError(f"dt must be in (0, T] (got dt={dt}, T={T}).")
    steps = int(np.ceil(T / dt - 1e-9))
    times = np.minimum(np.arange(steps + 1) * dt, T)
    times[-1] = T
    rng = np.random.default_rng(int(seed))
    increments = rng.standard_normal(steps) * np.sqrt(np.diff(times))
    values = np.append(0.0, np.cumsum(increments))
    prov = {"kind": "brownian", "seed": int(seed), "T": float(T), "dt": float(dt)}
    return Path(times, values, prov)


def sup_distance(p: Path, q: Path):
    """
    max |p(t) - q(t)| over the common horizon, evaluated on the union of the
    sample times (exact for piecewise linear paths).
    """
    T = min(p.T, q.T)
    t = np.union1d(p.times, q.times)
    t = t[t <= T]
    return float(np.max(np.abs(p(t) - q(t))))
