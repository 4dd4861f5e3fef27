# EXPERIMENTS MODULE


#! IMPORTS


import logging
import os
import numpy as np
import pandas as pd
import scipy.stats as ss
from .conjugate import Hamiltonian, make_hamiltonian
from .estimates import EstimateReport
from .grid1d import GridFn, PeriodicGrid1D, lipschitz_constant, oscillation, sample
from .hopflax import sample_2d
from .pathwise import Trajectory, solve_pathwise, solve_skeleton
from .paths import Path, piecewise_linear, ramp, sample_brownian, skeleton, sup_distance
from .utils import FLOAT_FORMAT, InvariantViolation, get_time, write_json


__all__ = [
    "INITIAL_DATA",
    "make_initial",
    "make_initial_2d",
    "LongTimeRun",
    "LimitEnsemble",
    "longtime_run",
    "deterministic_limit",
    "random_limit_montecarlo",
    "event_surrogate",
    "conditioned_events_check",
]


logger = logging.getLogger(__name__)


#! CONSTANTS


# initial data and their default parameters
INITIAL_DATA = {
    "cos": {"amplitude": 1.0, "frequency": 1.0},
    "sawtooth": {"slope": 1.0},
    "constant": {"value": 0.0},
}

# calibrated once on a validated 500 path run
MIN_VARIANCE = 0.01
MAX_MEAN_OFFSET = 0.05
MAX_SYMMETRY_STAT = 0.15

MIN_PATHS = 100


#! CLASSES


class LongTimeRun:
    """
    oscillation, maximum and minimum of a solution over time.

    Parameters
    ----------
    times: array-like
        the record times.

    maxima, minima: array-like
        max u(., t) and min u(., t) at the record times.

    eps_conv: float
        the oscillation threshold defining convergence.

    trajectory: Trajectory | None
        the trajectory the series were taken from.
    """

    def __init__(
        self,
        times,
        maxima,
        minima,
        eps_conv: float,
        trajectory: Trajectory | None = None,
    ):
        self._times = np.asarray(times, dtype=float).flatten()
        self._maxima = np.asarray(maxima, dtype=float).flatten()
        self._minima = np.asarray(minima, dtype=float).flatten()
        txt = "times, maxima and minima must have the same length."
        assert len(self._times) == len(self._maxima) == len(self._minima), txt
        self.eps_conv = float(eps_conv)
        self.trajectory = trajectory

    @property
    def times(self):
        """the record times."""
        return self._times.copy()

    @property
    def max_series(self):
        """(t, max) pairs."""
        return np.stack([self._times, self._maxima], axis=1)

    @property
    def min_series(self):
        """(t, min) pairs."""
        return np.stack([self._times, self._minima], axis=1)

    @property
    def oscillation_series(self):
        """(t, max - min) pairs."""
        return np.stack([self._times, self._maxima - self._minima], axis=1)

    @property
    def converged_at(self):
        """the first record time with oscillation <= eps_conv, or None."""
        osc = self._maxima - self._minima
        idx = np.where(osc <= self.eps_conv)[0]
        return None if len(idx) == 0 else float(self._times[idx[0]])

    @property
    def limit_estimate(self):
        """midpoint of the final maximum and minimum."""
        return float(0.5 * (self._maxima[-1] + self._minima[-1]))

    @property
    def error_bar(self):
        """half the final oscillation."""
        return float(0.5 * (self._maxima[-1] - self._minima[-1]))

    def __repr__(self):
        return "LongTimeRun(limit={:.6g} +/- {:.3g}, converged_at={})".format(
            self.limit_estimate, self.error_bar, self.converged_at
        )

    def to_frame(self):
        """the series as a pandas.DataFrame with columns t, max, min, oscillation."""
        return pd.DataFrame(
            {
                "t": self._times,
                "max": self._maxima,
                "min": self._minima,
                "oscillation": self._maxima - self._minima,
            }
        )

    def to_csv(self, path: str):
        """write the series as csv."""
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)


class LimitEnsemble:
    """
    empirical law of the long-time limit over a range of seeds.

    Parameters
    ----------
    seeds: array-like
        the seeds, one per path.

    limits: array-like
        the limit estimate of each path.

    converged_at: array-like
        the convergence time of each path (nan if not converged).

    params: dict | None
        the parameters the ensemble was generated with.
    """

    def __init__(self, seeds, limits, converged_at=None, params: dict | None = None):
        self._seeds = np.asarray(seeds, dtype=int).flatten()
        self._limits = np.asarray(limits, dtype=float).flatten()
        if converged_at is None:
            converged_at = np.full(len(self._seeds), np.nan)
        self._converged_at = np.asarray(converged_at, dtype=float).flatten()
        txt = "one limit per seed is required."
        assert len(self._seeds) == len(self._limits) == len(self._converged_at), txt
        self.params = {} if params is None else dict(params)

    @property
    def seeds(self):
        """the seeds."""
        return self._seeds.copy()

    @property
    def limits(self):
        """the limit estimates."""
        return self._limits.copy()

    @property
    def converged_at(self):
        """the convergence times."""
        return self._converged_at.copy()

    @property
    def mean(self):
        """the empirical mean of the limits."""
        return float(np.mean(self._limits))

    @property
    def variance(self):
        """the empirical (population) variance of the limits."""
        return float(np.var(self._limits))

    @property
    def symmetry_stat(self):
        """Kolmogorov-Smirnov distance between the laws of c and 1 - c."""
        if len(self._limits) == 0:
            return np.nan
        return float(ss.ks_2samp(self._limits, 1 - self._limits).statistic)

    def __len__(self):
        return len(self._seeds)

    def __repr__(self):
        return "LimitEnsemble(n={}, mean={:.4f}, variance={:.4f}, ks={:.4f})".format(
            len(self), self.mean, self.variance, self.symmetry_stat
        )

    def checks(self):
        """
        the pass flags of the statistical thresholds.
        """
        return {
            "variance": bool(self.variance > MIN_VARIANCE),
            "mean": bool(abs(self.mean - 0.5) < MAX_MEAN_OFFSET),
            "symmetry": bool(self.symmetry_stat < MAX_SYMMETRY_STAT),
        }

    def summary(self):
        """
        the summary.json content.
        """
        flags = self.checks()
        return {
            "n_paths": len(self),
            "mean": self.mean,
            "variance": self.variance,
            "ks": self.symmetry_stat,
            "converged": int(np.sum(np.isfinite(self._converged_at))),
            "pass": flags,
            "all_passed": all(flags.values()),
            "params": self.params,
        }

    def to_frame(self):
        """the ensemble as a pandas.DataFrame with columns seed, limit, converged_at."""
        return pd.DataFrame(
            {
                "seed": self._seeds,
                "limit": self._limits,
                "converged_at": self._converged_at,
            }
        )

    def save(self, directory: str):
        """
        write ensemble.csv and summary.json to directory.

        Returns
        -------
        summary: dict
            the summary written.
        """
        os.makedirs(directory, exist_ok=True)
        self.to_frame().to_csv(
            os.path.join(directory, "ensemble.csv"),
            index=False,
            float_format=FLOAT_FORMAT,
        )
        summary = self.summary()
        write_json(os.path.join(directory, "summary.json"), summary)
        return summary


#! FUNCTIONS


def make_initial(name: str, params: dict | None, grid: PeriodicGrid1D):
    """
    sample a named initial datum on the grid.

    Parameters
    ----------
    name: str
        "cos" (amplitude cos(2 pi frequency x / period)), "sawtooth"
        (slope (period / 2 - |x - period / 2|), i.e. 1 - |x - 1| on a
        period 2 grid) or "constant" (value).

    params: dict | None
        the parameters. Missing ones take the INITIAL_DATA defaults.

    grid: PeriodicGrid1D
        the grid.

    Returns
    -------
    u0: GridFn
        the sampled datum.
    """
    if name not in INITIAL_DATA:
        raise ValueError(f"unknown initial datum {name!r}.")
    par = dict(INITIAL_DATA[name])
    unknown = set(params or {}) - set(par)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}.")
    par.update({k: float(v) for k, v in (params or {}).items()})
    L = grid.period
    if name == "cos":
        a, f = par["amplitude"], par["frequency"]
        return sample(lambda x: a * np.cos(2 * np.pi * f * x / L), grid)
    if name == "sawtooth":
        s = par["slope"]
        return sample(lambda x: s * (L / 2 - abs(x - L / 2)), grid)
    c = par["value"]
    return sample(lambda x: c, grid)


def make_initial_2d(
    name: str,
    params: dict | None,
    n1: int,
    n2: int,
    period1: float = 1.0,
    period2: float = 1.0,
):
    """
    sample a named initial datum on a doubly periodic grid: "cos" gives
    amplitude cos(2 pi frequency x / period1) cos(2 pi frequency y / period2),
    "constant" gives value.

    Returns
    -------
    u0: GridFn2D
        the sampled datum.
    """
    if name not in ("cos", "constant"):
        raise ValueError(f"{name!r} is not available in 2D.")
    par = dict(INITIAL_DATA[name])
    unknown = set(params or {}) - set(par)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}.")
    par.update({k: float(v) for k, v in (params or {}).items()})
    if name == "cos":
        a, f = par["amplitude"], par["frequency"]

        def func(x, y):
            cx = np.cos(2 * np.pi * f * x / period1)
            return a * cx * np.cos(2 * np.pi * f * y / period2)

        return sample_2d(func, n1, n2, period1, period2)
    return sample_2d(lambda x, y: par["value"] + 0 * x, n1, n2, period1, period2)


def _check_series(values: np.ndarray, sense: int, name: str):
    """raise InvariantViolation if values are not monotone in sense."""
    scale = max(1.0, float(np.max(np.abs(values))))
    jumps = sense * np.diff(values)
    if np.any(jumps > 1e-12 * scale):
        k = int(np.argmax(jumps))
        msg = f"{name} series is not monotone at record {k + 1}: "
        raise InvariantViolation(msg + f"{values[k]:.17g} -> {values[k + 1]:.17g}")


def longtime_run(
    u0: GridFn,
    H: Hamiltonian,
    p: Path,
    record_times=None,
    eps_conv: float = 1e-2,
):
    """
    track the collapse of the oscillation along a path.

    Parameters
    ----------
    u0: GridFn
        the initial datum.

    H: Hamiltonian
        a convex Hamiltonian with H(0) = 0.

    p: Path
        the driving path.

    record_times: array-like | None
        the record times, by default 65 equispaced times on [0, T].

    eps_conv: float
        the convergence threshold on the oscillation.

    Returns
    -------
    run: LongTimeRun
        the series. The maximum is nonincreasing and the minimum
        nondecreasing at the record times.

    Raises
    ------
    ValueError
        if H(0) != 0.

    InvariantViolation
        if the max/min series are not monotone.
    """
    assert isinstance(H, Hamiltonian), "H must be a Hamiltonian instance."
    if abs(H.h0) > 1e-12:
        raise ValueError(f"H(0) must be 0 (got {H.h0:.6g}).")
    if not eps_conv > 0:
        raise ValueError("eps_conv must be positive.")
    if record_times is None:
        record_times = np.linspace(0, p.T, 65)
    traj = solve_pathwise(u0, H, p, record_times)
    maxima = np.array([u.max() for u in traj.snapshots])
    minima = np.array([u.min() for u in traj.snapshots])
    _check_series(maxima, 1, "max")
    _check_series(minima, -1, "min")
    run = LongTimeRun(traj.snapshot_times, maxima, minima, eps_conv, traj)
    logger.info("long-time run: %s", run)
    return run


def deterministic_limit(u0: GridFn, H: Hamiltonian, p: Path, T: float | None = None):
    """
    midpoint of max and min of the solution at T, computed along the
    skeleton of p.
    """
    u = solve_skeleton(u0, H, p, T)
    return float(0.5 * (u.max() + u.min()))


def _sawtooth_problem(grid_n: int):
    grid = PeriodicGrid1D(grid_n, 2.0)
    u0 = make_initial("sawtooth", {"slope": 1.0}, grid)
    return u0, make_hamiltonian("abs", P=1.0)


def random_limit_montecarlo(
    n_paths: int,
    seed0: int = 0,
    T: float = 4.0,
    dt: float = 1e-3,
    grid_n: int = 256,
    eps_conv: float = 1e-2,
):
    """
    law of the limit of du = |u_x| dB with u0 = 1 - |x - 1| on the period 2
    torus, over the Brownian paths of seeds seed0, ..., seed0 + n_paths - 1.

    Each path is reduced to its skeleton first; the limit is the midpoint
    of the final max and min and converged_at the first skeleton extremum
    time at which the oscillation along the reduced path is <= eps_conv.

    Parameters
    ----------
    n_paths: int
        the ensemble size (>= 100).

    seed0: int
        the first seed.

    T, dt: float
        horizon and step of the Brownian paths.

    grid_n: int
        the number of grid cells.

    eps_conv: float
        the convergence threshold.

    Returns
    -------
    ensemble: LimitEnsemble
        a pure function of the arguments.
    """
    if int(n_paths) < MIN_PATHS:
        raise ValueError(f"n_paths must be >= {MIN_PATHS} (got {n_paths}).")
    tic = get_time()
    u0, H = _sawtooth_problem(grid_n)
    seeds = np.arange(int(seed0), int(seed0) + int(n_paths))
    limits = np.zeros(len(seeds))
    converged = np.full(len(seeds), np.nan)
    step = max(1, len(seeds) // 10)
    for i, seed in enumerate(seeds):
        p = sample_brownian(int(seed), T, dt)
        reduced = skeleton(p).reduced
        run = LongTimeRun(
            *_extrema_series(solve_pathwise(u0, H, reduced)), eps_conv=eps_conv
        )
        limits[i] = run.limit_estimate
        if run.converged_at is not None:
            converged[i] = run.converged_at
        if (i + 1) % step == 0:
            logger.info("montecarlo: %d of %d paths", i + 1, len(seeds))
    params = {
        "n_paths": int(n_paths),
        "seed0": int(seed0),
        "T": float(T),
        "dt": float(dt),
        "grid_n": int(grid_n),
        "eps_conv": float(eps_conv),
    }
    ensemble = LimitEnsemble(seeds, limits, converged, params)
    logger.info("%s done in %s", ensemble, get_time(tic))
    return ensemble


def _extrema_series(traj: Trajectory):
    times = traj.snapshot_times
    maxima = np.array([u.max() for u in traj.snapshots])
    minima = np.array([u.min() for u in traj.snapshots])
    return times, maxima, minima


def event_surrogate(sign: int, eps: float, T: float = 2.0, step: float = 0.25):
    """
    a piecewise linear path within eps of sign * t on [0, T] in sup norm:
    sign * t_k + (-1)^k 0.8 eps at t_k = k step (0 at t = 0).
    """
    assert sign in (1, -1), "sign must be 1 or -1."
    if eps < 0:
        raise ValueError("eps must be nonnegative.")
    times = np.append(np.arange(0, T, step), T)
    offsets = 0.8 * eps * (-1.0) ** np.arange(len(times))
    offsets[0] = 0.0
    points = np.stack([times, sign * times + offsets], axis=1)
    prov = {"kind": "event_surrogate", "sign": int(sign), "eps": float(eps)}
    return piecewise_linear(points, prov)


def _rejection_path(sign: int, eps: float, T: float, dt: float, seeds):
    target = ramp(float(sign), T)
    for seed in seeds:
        p = sample_brownian(int(seed), T, dt)
        if sup_distance(p, target) <= eps:
            return p
    return None


def conditioned_events_check(
    eps: float = 0.25,
    T: float = 2.0,
    n: int = 256,
    rejection_tries: int = 0,
    seed0: int = 0,
    dt: float = 1e-3,
):
    """
    check that on the events {|zeta(t) -+ t| <= eps on [0, T]} the
    solution of du = |u_x| dzeta with u0 = 1 - |x - 1| ends above
    1 - L eps (plus event) and below L eps (minus event), L being the
    Lipschitz constant of u0.

    Parameters
    ----------
    eps: float
        the event width, 1 / (4 L) = 1/4 for the sawtooth. eps = 0 gives
        the exact ramps.

    T: float
        the horizon.

    n: int
        the number of grid cells.

    rejection_tries: int
        if positive, Brownian paths of seeds seed0, seed0 + 1, ... are
        sampled until one falls in the event, and used in place of the
        constructed surrogate. If none does, the surrogate is used.

    seed0: int
        the first rejection sampling seed.

    dt: float
        the step of the rejection sampled paths.

    Returns
    -------
    reports: list of EstimateReport
        "event_plus_min" (min u(., T) >= 1 - L eps) and "event_minus_max"
        (max u(., T) <= L eps).
    """
    u0, H = _sawtooth_problem(n)
    L = lipschitz_constant(u0)
    reports = []
    for sign, name in [(1, "event_plus_min"), (-1, "event_minus_max")]:
        p = None
        if rejection_tries > 0:
            seeds = range(int(seed0), int(seed0) + int(rejection_tries))
            p = _rejection_path(sign, eps, T, dt, seeds)
            if p is None:
                logger.warning(
                    "no path out of %d fell in the %s event, using the surrogate",
                    rejection_tries,
                    "plus" if sign > 0 else "minus",
                )
        if p is None:
            p = event_surrogate(sign, eps, T)
        u = solve_skeleton(u0, H, p, T)
        ctx = {"zeta": float(p(T)), "M": float(np.max(p.values)), "m": float(np.min(p.values))}
        if sign > 0:
            rep = EstimateReport(T, name, u.min(), 1 - L * eps, 0.0, "lower", ctx)
        else:
            rep = EstimateReport(T, name, u.max(), L * eps, 0.0, "upper", ctx)
        logger.info("%s: oscillation %.3g, %s", p.provenance["kind"], oscillation(u), rep)
        reports += [rep]
    return reports
