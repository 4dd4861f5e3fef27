# PATHWISE MODULE


#! IMPORTS


import logging
import os
from typing import Callable
import numpy as np
import pandas as pd
from .conjugate import Hamiltonian, QuadraticHamiltonian2D
from .grid1d import GridFn
from .hopflax import (
    GridFn2D,
    MIN_WINDOW_CELLS,
    apply_flow,
    default_slope_range,
    s_minus_quadratic_2d,
    s_plus_quadratic_2d,
    t_min,
)
from .paths import Path, monotone_segments, ramp, skeleton
from .utils import IncrementTooSmall, get_files, get_time, read_json, write_json


__all__ = [
    "Trajectory",
    "solve_pathwise",
    "solve_skeleton",
    "solve_monotone_scheme",
    "solve_pathwise_quadratic_2d",
    "flow_quadratic_2d",
]


logger = logging.getLogger(__name__)


#! CONSTANTS


FLUXES = ("lax_friedrichs", "godunov")


#! CLASSES


class Trajectory:
    """
    snapshots of a solution along a driving path.

    Parameters
    ----------
    snapshot_times: 1D array-like
        the strictly increasing snapshot times.

    snapshots: list of GridFn | list of GridFn2D
        one solution per time, all on the same grid.

    path: Path
        the driving path.

    hamiltonian_id: str
        the identifier of the Hamiltonian.

    approximate: 1D array-like of bool | None
        True where the snapshot is the last computed state rather than the
        solution at that time (an increment below t_min was pending).
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(
        self,
        snapshot_times,
        snapshots: list,
        path: Path,
        hamiltonian_id: str,
        approximate=None,
    ):
        assert isinstance(path, Path), "path must be a Path instance."
        assert isinstance(hamiltonian_id, str), "hamiltonian_id must be a str."
        times = np.array(snapshot_times, dtype=float).flatten()
        snapshots = list(snapshots)
        if len(times) != len(snapshots):
            raise ValueError("one snapshot per time is required.")
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing.")
        if len(snapshots) > 0:
            ref = snapshots[0]
            assert isinstance(ref, (GridFn, GridFn2D)), "invalid snapshot."
            for snap in snapshots[1:]:
                if not _same_grid(ref, snap):
                    raise ValueError("all snapshots must share one grid.")
        if approximate is None:
            approximate = np.zeros(len(times), dtype=bool)
        approximate = np.array(approximate, dtype=bool).flatten()
        if len(approximate) != len(times):
            raise ValueError("one approximate flag per snapshot is required.")
        self._times = times
        self._snapshots = snapshots
        self._path = path
        self._hamiltonian_id = hamiltonian_id
        self._approximate = approximate

    # ****** PROPERTIES ****** #

    @property
    def snapshot_times(self):
        """the snapshot times."""
        return self._times

    @property
    def snapshots(self):
        """the list of snapshots."""
        return list(self._snapshots)

    @property
    def path(self):
        """the driving path."""
        return self._path

    @property
    def hamiltonian_id(self):
        """the identifier of the Hamiltonian."""
        return self._hamiltonian_id

    @property
    def approximate(self):
        """the flags of the snapshots computed from a pending state."""
        return self._approximate.copy()

    @property
    def final(self):
        """the last snapshot."""
        return self._snapshots[-1]

    @property
    def is_2d(self):
        """True if the snapshots are GridFn2D objects."""
        return isinstance(self._snapshots[0], GridFn2D)

    # ****** METHODS ****** #

    def __len__(self):
        return len(self._times)

    def __iter__(self):
        return iter(zip(self._times, self._snapshots))

    def __repr__(self):
        return "Trajectory({}, snapshots={}, T={:g})".format(
            self._hamiltonian_id, len(self), self._path.T
        )

    def snapshot_at(self, t: float):
        """return the snapshot recorded at time t."""
        idx = np.flatnonzero(np.isclose(self._times, t, rtol=0, atol=1e-12))
        if len(idx) == 0:
            raise KeyError(f"no snapshot at t={t}.")
        return self._snapshots[int(idx[0])]

    def with_snapshots(self, snapshots: list):
        """return a copy with the snapshots replaced."""
        return Trajectory(
            self._times,
            snapshots,
            self._path,
            self._hamiltonian_id,
            self._approximate,
        )

    def grid_dict(self):
        """the JSON-ready description of the snapshot grid."""
        ref = self._snapshots[0]
        if isinstance(ref, GridFn2D):
            return {
                "n1": ref.n1,
                "n2": ref.n2,
                "period1": ref.period1,
                "period2": ref.period2,
            }
        return ref.grid.to_dict()

    def manifest(self):
        """the JSON-ready description of the trajectory."""
        return {
            "grid": self.grid_dict(),
            "hamiltonian": self._hamiltonian_id,
            "path": self._path.provenance,
            "snapshot_times": [float(t) for t in self._times],
            "approximate": [bool(a) for a in self._approximate],
        }

    def save(self, directory: str, config: dict | None = None):
        """
        write the trajectory to directory: manifest.json, path.csv and
        one snapshot_XXX.csv per snapshot.

        Parameters
        ----------
        directory: str
            the output directory (created if needed).

        config: dict | None
            the resolved experiment configuration echoed in the manifest.
        """
        os.makedirs(directory, exist_ok=True)
        manifest = self.manifest()
        if config is not None:
            manifest["config"] = config
        write_json(os.path.join(directory, "manifest.json"), manifest)
        self._path.to_csv(os.path.join(directory, "path.csv"))
        for i, snap in enumerate(self._snapshots):
            snap.to_csv(os.path.join(directory, f"snapshot_{i:03d}.csv"))
        logger.info("trajectory saved to %s", directory)

    @classmethod
    def load(cls, directory: str):
        """
        read a trajectory written by save.
        """
        manifest = read_json(os.path.join(directory, "manifest.json"))
        grid = manifest["grid"]
        files = get_files(directory, ".csv")
        files = [i for i in files if os.path.basename(i).startswith("snapshot_")]
        files = sorted(files, key=lambda x: int(os.path.basename(x)[9:-4]))
        snapshots = []
        for file in files:
            if "n1" in grid:
                frame = pd.read_csv(file)
                values = frame["value"].to_numpy().reshape(grid["n1"], grid["n2"])
                snap = GridFn2D(values, grid["period1"], grid["period2"])
            else:
                snap = GridFn.read_csv(file, grid["period"])
            snapshots += [snap]
        path = Path.read_csv(os.path.join(directory, "path.csv"))
        path = Path(path.times, path.values, manifest["path"])
        return cls(
            manifest["snapshot_times"],
            snapshots,
            path,
            manifest["hamiltonian"],
            manifest["approximate"],
        )


class _FlowWalker:
    """
    the state of a composition along the monotone segments of a path.

    state is the solution where the last applied increment (last) ended and
    base the solution it was applied to. carried holds the path
    displacements from there visited by increments too small to apply.
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(self, u0, apply: Callable, tmin: float, coalesce: bool):
        self.state = u0
        self.base = None
        self.last = 0.0
        self.carried = [0.0]
        self.tainted = False
        self._apply = apply
        self._tmin = tmin
        self._coalesce = coalesce

    # ****** PROPERTIES ****** #

    @property
    def carry(self):
        """the current displacement from the last applied increment."""
        return self.carried[-1]

    # ****** METHODS ****** #

    def _too_small(self, increment: float):
        if abs(increment) >= self._tmin * (1 - 1e-12):
            return False
        if increment != 0 and not self._coalesce:
            msg = "increment too small for grid: {:.6g} < t_min={:.6g}; "
            msg += "coarsen record_times or enable coalescing."
            raise IncrementTooSmall(msg.format(abs(increment), self._tmin))
        return True

    def reach(self, target: float):
        """
        the solution at displacement target, the path moving monotonically
        there after the carried excursions.

        Returns
        -------
        solution, approximate, base, last: tuple
            base and last describe the final monotone piece (None, None if
            target is below t_min and state is returned unchanged).
        """
        if self._too_small(target):
            moved = target != 0 or any(c != 0 for c in self.carried)
            return self.state, self.tainted or moved, None, None
        sign = float(np.sign(target))
        back = max(-sign * c for c in self.carried)
        if back <= 0 or sign == np.sign(self.last):
            # the excursions lie between the ends of the final piece
            new = self._apply(self.state, target)
            return new, self.tainted, self.state, target
        if self.base is None:
            # an excursion behind the initial datum cannot be applied
            new = self._apply(self.state, target)
            return new, True, self.state, target
        # the excursion extends the last monotone piece
        base = self._apply(self.base, self.last - sign * back)
        last = target + sign * back
        return self._apply(base, last), self.tainted, base, last

    def advance(self, target: float):
        """
        move to displacement target, carrying it when below t_min.
        Returns True if the move was carried.
        """
        state, approx, base, last = self.reach(target)
        if base is None:
            self.carried += [target]
            return True
        self.state, self.base, self.last = state, base, last
        self.tainted = approx
        self.carried = [0.0]
        return False


#! FUNCTIONS


def _same_grid(a, b):
    if isinstance(a, GridFn) and isinstance(b, GridFn):
        return a.grid == b.grid
    if isinstance(a, GridFn2D) and isinstance(b, GridFn2D):
        return (
            a.values.shape == b.values.shape
            and a.period1 == b.period1
            and a.period2 == b.period2
        )
    return False


def _record_times(p: Path, record_times, segments: list):
    """
    sorted unique record times, by default 0 and the segment ends.
    """
    if record_times is None:
        times = [0.0] + [s.t_end for s in segments]
        if len(segments) == 0:
            times += [p.T]
        return np.unique(times)
    times = np.unique(np.asarray(record_times, dtype=float).flatten())
    if len(times) == 0:
        raise ValueError("record_times must not be empty.")
    if times[0] < 0 or times[-1] > p.T * (1 + 1e-12):
        raise ValueError(f"record_times must lie in [0, {p.T:g}].")
    return np.minimum(times, p.T)


def _compose(
    u0,
    p: Path,
    record_times,
    apply: Callable,
    tmin: float,
    merge_tol: float | None,
    coalesce: bool,
):
    """
    compose the flow along the monotone segments of p.

    Parameters
    ----------
    u0: GridFn | GridFn2D
        the initial datum.

    p: Path
        the driving path.

    record_times: array-like | None
        the snapshot times.

    apply: callable
        apply(state, signed_increment) -> new state.

    tmin: float
        the smallest increment apply accepts.

    merge_tol: float | None
        flat-run tolerance of the segment decomposition.

    coalesce: bool
        if True, increments below tmin are carried forward; otherwise
        IncrementTooSmall is raised. A carried excursion which overshoots
        the end of the last applied piece extends that piece, so merging is
        exact unless it overshoots the initial datum. Snapshots taken on a
        carried state, or after an inexact merge, are flagged.

    Returns
    -------
    times, snapshots, approximate: tuple
        the record times, the snapshots and their approximation flags.
    """
    segments = monotone_segments(p, merge_tol)
    times = _record_times(p, record_times, segments)
    walker = _FlowWalker(u0, apply, tmin, coalesce)

    snapshots = []
    approximate = []
    k = 0
    for seg in segments:
        # times before the segment start (flat prefix or segment boundary)
        while k < len(times) and times[k] <= seg.t_start:
            snap, approx, _, _ = walker.reach(walker.carry)
            snapshots += [snap]
            approximate += [approx]
            k += 1

        # times inside the segment, computed from the segment start
        z0 = float(p.values[seg.i_start])
        while k < len(times) and times[k] < seg.t_end:
            target = walker.carry + float(p(times[k])) - z0
            snap, approx, _, _ = walker.reach(target)
            snapshots += [snap]
            approximate += [approx]
            k += 1

        # the whole segment
        carried = walker.advance(walker.carry + seg.signed_increment)
        logger.debug(
            "segment %s [%.6g, %.6g]: increment %.6g%s",
            seg.direction,
            seg.t_start,
            seg.t_end,
            seg.increment,
            " (carried)" if carried else "",
        )

    # times after the last segment
    while k < len(times):
        snap, approx, _, _ = walker.reach(walker.carry)
        snapshots += [snap]
        approximate += [approx]
        k += 1

    approximate = np.array(approximate, dtype=bool)
    if np.any(approximate):
        logger.warning(
            "%d of %d snapshots are approximate (increments below "
            "t_min=%.6g were coalesced)",
            int(np.sum(approximate)),
            len(approximate),
            tmin,
        )
    return times, snapshots, approximate


def solve_pathwise(
    u0: GridFn,
    H: Hamiltonian,
    p: Path,
    record_times=None,
    merge_tol: float | None = None,
    coalesce: bool = True,
):
    """
    solve du = H(u_x) dzeta on the periodic grid along the path p.

    Parameters
    ----------
    u0: GridFn
        the initial datum.

    H: Hamiltonian
        the Hamiltonian.

    p: Path
        the driving path.

    record_times: array-like | None
        the snapshot times in [0, T]. By default 0 and the ends of the
        monotone segments of p.

    merge_tol: float | None
        flat-run tolerance of the segment decomposition.

    coalesce: bool
        if True (default), increments below t_min are carried forward into
        the next segment and the snapshots depending on them are flagged
        as approximate. If False, such increments raise IncrementTooSmall.

    Returns
    -------
    traj: Trajectory
        the snapshots. Within an up segment the solution is
        s_plus(state, zeta(t) - zeta(t_start)); within a down segment it is
        s_minus(state, zeta(t_start) - zeta(t)).

    Raises
    ------
    IncrementTooSmall
        if coalesce is False and an increment is below t_min.
    """
    assert isinstance(u0, GridFn), "u0 must be a GridFn instance."
    assert isinstance(H, Hamiltonian), "H must be a Hamiltonian instance."
    assert isinstance(p, Path), "p must be a Path instance."
    tic = get_time()
    times, snaps, approx = _compose(
        u0=u0,
        p=p,
        record_times=record_times,
        apply=lambda u, d: apply_flow(u, H, d),
        tmin=t_min(u0.h, H),
        merge_tol=merge_tol,
        coalesce=coalesce,
    )
    logger.info(
        "pathwise solve of %s along %d samples done in %s",
        H.id,
        len(p),
        get_time(tic),
    )
    return Trajectory(times, snaps, p, H.id, approx)


def solve_skeleton(
    u0: GridFn,
    H: Hamiltonian,
    p: Path,
    T: float | None = None,
    merge_tol: float | None = None,
    coalesce: bool = True,
):
    """
    solution at T computed along the skeleton of p on [0, T].

    The solution at T depends on the path only through its successive
    extrema, so the reduced path gives the same result with far fewer
    operator applications.

    Returns
    -------
    u: GridFn
        the solution at T.
    """
    sk = skeleton(p, T)
    reduced = sk.reduced
    logger.debug("skeleton solve: %d extrema out of %d samples", len(sk.tau), len(p))
    traj = solve_pathwise(u0, H, reduced, [reduced.T], merge_tol, coalesce)
    return traj.final


def _godunov(H: Hamiltonian, pm, pp, c: float, p_star: float):
    """
    Godunov numerical Hamiltonian of u_t + F(u_x) = 0 with F = -c H.
    p_star is the minimizer of H on the slope range.
    """
    lo = np.minimum(pm, pp)
    hi = np.maximum(pm, pp)
    h_ends = np.maximum(H(pm), H(pp))
    h_min = H(np.clip(p_star, lo, hi))
    rising = pm <= pp
    if c > 0:
        # min of -cH on [pm, pp], max of -cH on [pp, pm]
        return np.where(rising, -c * h_ends, -c * h_min)
    return np.where(rising, -c * h_min, -c * h_ends)


def solve_monotone_scheme(
    u0: GridFn,
    H: Hamiltonian,
    p: Path,
    cfl: float = 0.4,
    flux: str | None = None,
):
    """
    explicit monotone finite difference scheme for u_t = H(u_x) zeta'(t)
    along a piecewise linear path. It is an independent referee for the
    Hopf-Lax based solvers.

    Parameters
    ----------
    u0: GridFn
        the initial datum.

    H: Hamiltonian
        the Hamiltonian (degenerate ones are accepted).

    p: Path
        the piecewise linear driving path.

    cfl: float
        the Courant number in (0, 0.5].

    flux: str | None
        "lax_friedrichs" (global viscosity V = max |H'| on the slope range)
        or "godunov" (exact Riemann flux for convex H). By default godunov
        for uniformly convex H and lax_friedrichs for degenerate or linear
        H.

    Returns
    -------
    u: GridFn
        the solution at p.T.

    Notes
    -----
    every path interval [t_k, t_k+1] is integrated with
    ceil(|dzeta| V / (cfl h)) steps of equal zeta increment, which is the
    step dt = cfl h / (V |zeta'|) on that interval.
    """
    assert isinstance(u0, GridFn), "u0 must be a GridFn instance."
    assert isinstance(H, Hamiltonian), "H must be a Hamiltonian instance."
    if not (0 < cfl <= 0.5):
        raise ValueError(f"cfl must be in (0, 0.5] (got {cfl}).")
    if flux is None:
        flux = "lax_friedrichs" if H.degenerate_convexity else "godunov"
    if flux not in FLUXES:
        raise ValueError(f"flux must be one of {FLUXES}.")
    tic = get_time()
    h = u0.h
    V = H.max_speed
    u = np.array(u0.values, dtype=float)
    p_star = float(H.slopes[int(np.argmin(H(H.slopes)))])
    steps = 0
    for dz in np.diff(p.values):
        if dz == 0:
            continue
        k = max(1, int(np.ceil(abs(dz) * V / (cfl * h))))
        d = dz / k
        for _ in range(k):
            up = np.roll(u, -1)
            um = np.roll(u, 1)
            pp = (up - u) / h
            pm = (u - um) / h
            if flux == "lax_friedrichs":
                visc = abs(d) * V / (2 * h)
                u = u + d * H(0.5 * (pp + pm)) + visc * (up - 2 * u + um)
            else:
                u = u - abs(d) * _godunov(H, pm, pp, np.sign(d), p_star)
        steps += k
    logger.info(
        "%s scheme: %d steps in %s", flux.replace("_", "-"), steps, get_time(tic)
    )
    return u0.with_values(u)


def solve_pathwise_quadratic_2d(
    u0: GridFn2D,
    Q: QuadraticHamiltonian2D,
    p: Path,
    record_times=None,
    P: float | None = None,
    merge_tol: float | None = None,
    coalesce: bool = True,
):
    """
    2D counterpart of solve_pathwise for the quadratic Hamiltonian (Ap, p).

    Parameters
    ----------
    u0: GridFn2D
        the initial datum (at most 128 x 128).

    Q: QuadraticHamiltonian2D
        the Hamiltonian.

    p: Path
        the driving path.

    record_times: array-like | None
        the snapshot times.

    P: float | None
        the slope bound defining the windows, by default
        default_slope_range(u0).

    Raises
    ------
    WindowTooLarge
        if a window exceeds half a period.
    """
    assert isinstance(u0, GridFn2D), "u0 must be a GridFn2D instance."
    assert isinstance(Q, QuadraticHamiltonian2D), "Q must be quadratic 2D."
    if P is None:
        P = default_slope_range(u0)

    def apply(u, d):
        if d > 0:
            return s_plus_quadratic_2d(u, Q, d, P)
        return s_minus_quadratic_2d(u, Q, -d, P)

    tmin = MIN_WINDOW_CELLS * min(u0.h1, u0.h2) / Q.max_speed(P)
    times, snaps, approx = _compose(
        u0, p, record_times, apply, tmin, merge_tol, coalesce
    )
    return Trajectory(times, snaps, p, Q.id, approx)


def flow_quadratic_2d(
    u0: GridFn2D,
    Q: QuadraticHamiltonian2D,
    times,
    direction: str = "plus",
    P: float | None = None,
):
    """
    single-sign 2D flow: snapshots of s_plus (or s_minus) of u0 at the
    given elapsed times, each computed from u0.
    """
    assert direction in ("plus", "minus"), "direction must be plus or minus."
    times = np.asarray(times, dtype=float).flatten()
    slope = 1.0 if direction == "plus" else -1.0
    p = ramp(slope, float(np.max(times)))
    return solve_pathwise_quadratic_2d(u0, Q, p, times, P)
