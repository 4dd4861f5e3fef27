# ESTIMATES MODULE


#! IMPORTS


import logging
import os
import numpy as np
import pandas as pd
from .conjugate import Hamiltonian, QuadraticHamiltonian2D
from .grid1d import GridFn, lipschitz_constant
from .hopflax import GridFn2D
from .pathwise import Trajectory
from .paths import Path, monotone_segments
from .utils import DegenerateHamiltonianError, FLOAT_FORMAT, write_json


__all__ = [
    "CurvatureProbe",
    "EstimateReport",
    "probe_stencil",
    "curvature_w",
    "curvature_w_2d",
    "regularizing_bound",
    "classical_regularizing_bound",
    "propagation_bound",
    "classical_propagation_bound",
    "intermittent_bounds",
    "lipschitz_decay_bound",
    "check_regularizing",
    "check_propagation",
    "check_intermittent",
    "check_lipschitz_decay",
    "check_monotonicity",
    "reports_frame",
    "summarize_reports",
    "save_reports",
]


logger = logging.getLogger(__name__)


#! CONSTANTS


# the verification probes span period / PROBE_CELLS at least
PROBE_CELLS = 32

# multiplier of h in the curvature slack
CURVATURE_SLACK_CELLS = 10

# multiplier of h in the Lipschitz slack
LIPSCHITZ_SLACK_CELLS = 4

STATUSES = ("ok", "vacuous", "skipped")


#! CLASSES


class CurvatureProbe:
    """
    discrete curvature quantity W = H''(u_x) u_xx of a sampled function.

    Parameters
    ----------
    w_values: GridFn | GridFn2D
        the node values of W. For 2D probes these are the largest
        eigenvalues of F D^2u F.

    w_min, w_max: float
        the smallest and largest value of W (smallest and largest
        eigenvalue in 2D).

    h_slack: float
        the discretization tolerance (Theta * Lip(u) + 1) * 10 h.

    stencil: int
        the number of cells spanned by the difference quotients.
    """

    def __init__(
        self,
        w_values: GridFn | GridFn2D,
        w_min: float,
        w_max: float,
        h_slack: float,
        stencil: int = 1,
    ):
        if not w_min <= w_max:
            raise ValueError("w_min must not exceed w_max.")
        if not h_slack > 0:
            raise ValueError("h_slack must be positive.")
        self.w_values = w_values
        self.w_min = float(w_min)
        self.w_max = float(w_max)
        self.h_slack = float(h_slack)
        self.stencil = int(stencil)

    def __repr__(self):
        return "CurvatureProbe(w_min={:.6g}, w_max={:.6g}, h_slack={:.3g})".format(
            self.w_min, self.w_max, self.h_slack
        )


class EstimateReport:
    """
    verdict on one measured quantity against its theoretical bound.

    Parameters
    ----------
    time: float
        the snapshot time.

    quantity: str
        the name of the quantity (e.g. curvature_upper, lipschitz).

    measured: float
        the measured value.

    bound: float
        the theoretical bound.

    slack: float
        the tolerance granted to the measurement.

    sense: str
        "upper" if measured must not exceed bound + slack, "lower" if it
        must not fall below bound - slack.

    context: dict | None
        the path statistics zeta, M and m at time.

    status: str
        "ok" for a checked report, "vacuous" when the bound carries no
        information and "skipped" when it is undefined.

    reason: str
        why the report is vacuous or skipped.
    """

    def __init__(
        self,
        time: float,
        quantity: str,
        measured: float,
        bound: float,
        slack: float,
        sense: str = "upper",
        context: dict | None = None,
        status: str = "ok",
        reason: str = "",
    ):
        assert sense in ("upper", "lower"), "sense must be upper or lower."
        assert status in STATUSES, f"status must be one of {STATUSES}."
        self.time = float(time)
        self.quantity = quantity
        self.measured = float(measured)
        self.bound = float(bound)
        self.slack = float(slack)
        self.sense = sense
        self.context = {"zeta": np.nan, "M": np.nan, "m": np.nan}
        self.context.update(context or {})
        self.status = status
        self.reason = reason

    @property
    def passed(self):
        """True if the measured value respects the bound within slack."""
        if self.status != "ok":
            return True
        if self.sense == "upper":
            return bool(self.measured <= self.bound + self.slack)
        return bool(self.measured >= self.bound - self.slack)

    def to_dict(self):
        """the report as a flat dict (the reports.csv row)."""
        return {
            "t": self.time,
            "quantity": self.quantity,
            "measured": self.measured,
            "bound": self.bound,
            "slack": self.slack,
            "pass": self.passed,
            "zeta": self.context["zeta"],
            "M": self.context["M"],
            "m": self.context["m"],
            "status": self.status,
            "reason": self.reason,
        }

    def __repr__(self):
        out = "EstimateReport(t={:g}, {}, measured={:.6g}, bound={:.6g}, {})"
        verdict = self.status if self.status != "ok" else str(self.passed)
        return out.format(
            self.time, self.quantity, self.measured, self.bound, verdict
        )


#! FUNCTIONS


def probe_stencil(n: int):
    """
    the stencil used by the checks on a grid of n cells: difference
    quotients span at least period / PROBE_CELLS, so O(h^2) errors in the
    values stay O(h) in the second difference quotients.

    The span is a fixed fraction of the period, not a fixed number of
    cells. Curvature concentrated on fewer than about 2 n / PROBE_CELLS
    cells (a kink younger than that span) is averaged over the stencil, so
    the checks lose sensitivity there and a violation narrower than the
    span can go unnoticed at any resolution. Pass an explicit stencil to
    the checks to resolve such features.
    """
    return max(1, int(n) // PROBE_CELLS)


def _second_difference(values: np.ndarray, h: float, k: int, axis: int = 0):
    up = np.roll(values, -k, axis=axis)
    dn = np.roll(values, k, axis=axis)
    return (up - 2 * values + dn) / (k * h) ** 2


def _centered_gradient(values: np.ndarray, h: float, k: int, axis: int = 0):
    up = np.roll(values, -k, axis=axis)
    dn = np.roll(values, k, axis=axis)
    return (up - dn) / (2 * k * h)


def curvature_w(u: GridFn, H: Hamiltonian, stencil: int = 1):
    """
    discrete W(x) = H''(u_x) u_xx of a 1D function.

    Parameters
    ----------
    u: GridFn
        the sampled function.

    H: Hamiltonian
        a uniformly convex Hamiltonian.

    stencil: int
        the difference quotients use the nodes i - stencil, i, i + stencil.

    Returns
    -------
    probe: CurvatureProbe
        H'' is read from the certified second difference table of H at the
        centered gradient.

    Raises
    ------
    DegenerateHamiltonianError
        if H is not uniformly convex.
    """
    assert isinstance(u, GridFn), "u must be a GridFn instance."
    assert isinstance(H, Hamiltonian), "H must be a Hamiltonian instance."
    if H.degenerate_convexity:
        raise DegenerateHamiltonianError(f"{H.id} has degenerate convexity.")
    k = int(stencil)
    if not 1 <= k < u.grid.n // 2:
        raise ValueError(f"stencil must be in [1, {u.grid.n // 2}).")
    grad = _centered_gradient(u.values, u.h, k)
    d2 = _second_difference(u.values, u.h, k)
    w = H.second_derivative(grad) * d2
    slack = (H.Theta * lipschitz_constant(u) + 1) * CURVATURE_SLACK_CELLS * u.h
    return CurvatureProbe(u.with_values(w), np.min(w), np.max(w), slack, k)


def curvature_w_2d(u: GridFn2D, Q: QuadraticHamiltonian2D, stencil: int = 1):
    """
    discrete matrix probe F D^2u F with F = sqrt(2A) of a 2D function.

    Returns
    -------
    probe: CurvatureProbe
        w_min and w_max are the extreme eigenvalues over the nodes,
        w_values holds the largest eigenvalue at each node.
    """
    assert isinstance(u, GridFn2D), "u must be a GridFn2D instance."
    assert isinstance(Q, QuadraticHamiltonian2D), "Q must be quadratic 2D."
    k = int(stencil)
    if not 1 <= k < min(u.n1, u.n2) // 2:
        raise ValueError("stencil too large for the grid.")
    v = u.values
    uxx = _second_difference(v, u.h1, k, 0)
    uyy = _second_difference(v, u.h2, k, 1)
    pp = np.roll(v, (-k, -k), axis=(0, 1))
    pm = np.roll(v, (-k, k), axis=(0, 1))
    mp = np.roll(v, (k, -k), axis=(0, 1))
    mm = np.roll(v, (k, k), axis=(0, 1))
    uxy = (pp - pm - mp + mm) / (4 * k**2 * u.h1 * u.h2)
    hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    F = Q.F
    w = np.einsum("ij,...jk,kl->...il", F, hess, F)
    eig = np.linalg.eigvalsh(w)
    slack = (Q.Theta * u.gradient_norm() + 1) * CURVATURE_SLACK_CELLS * u.h
    return CurvatureProbe(
        u.with_values(eig[..., 1]),
        np.min(eig[..., 0]),
        np.max(eig[..., 1]),
        slack,
        k,
    )


def regularizing_bound(C0: float, t: float):
    """
    sharp one-sided bound C0 / (1 + C0 t); 1 / t when C0 is infinite.
    """
    if np.isinf(C0):
        return np.inf if t == 0 else 1.0 / t
    return C0 / (1 + C0 * t)


def classical_regularizing_bound(C0: float, t: float, theta: float):
    """
    classical bound C0 / (1 + theta C0 t); 1 / (theta t) when C0 is
    infinite.
    """
    if np.isinf(C0):
        return np.inf if t == 0 or theta == 0 else 1.0 / (theta * t)
    return C0 / (1 + theta * C0 * t)


def propagation_bound(C0: float, t: float):
    """
    sharp propagation bound -C0 / (1 - C0 t), -inf once C0 t >= 1.
    """
    C0 = max(0.0, C0)
    if C0 * t >= 1:
        return -np.inf
    return -C0 / (1 - C0 * t)


def classical_propagation_bound(C0: float, t: float, Theta: float):
    """
    classical propagation bound -C0 / (1 - Theta C0 t), -inf once
    Theta C0 t >= 1.
    """
    C0 = max(0.0, C0)
    if Theta * C0 * t >= 1:
        return -np.inf
    return -C0 / (1 - Theta * C0 * t)


def intermittent_bounds(zeta: float, M: float, m: float):
    """
    the bounds of -W at a time where m < zeta < M.

    Returns
    -------
    upper, lower: float
        1 / (zeta - m) and -1 / (M - zeta). Either is nan if its
        denominator vanishes.
    """
    upper = 1.0 / (zeta - m) if zeta > m else np.nan
    lower = -1.0 / (M - zeta) if zeta < M else np.nan
    return upper, lower


def lipschitz_decay_bound(norm: float, theta: float, M: float, m: float):
    """
    the Lipschitz bound sqrt(2 |u| / (theta (M - m))).
    """
    return float(np.sqrt(2 * norm / (theta * (M - m))))


def _path_stats(p: Path, t: float):
    """
    zeta(t), M(t) and m(t) of the piecewise linear path.
    """
    z = float(p(t))
    keep = p.values[p.times <= t]
    return {
        "zeta": z,
        "M": float(max(np.max(keep), z)),
        "m": float(min(np.min(keep), z)),
    }


def _elapsed(traj: Trajectory, direction: str):
    """
    elapsed flow times of a single-sign trajectory.
    """
    assert direction in ("plus", "minus"), "direction must be plus or minus."
    wanted = "up" if direction == "plus" else "down"
    segments = monotone_segments(traj.path)
    if any(s.direction != wanted for s in segments) or len(segments) > 1:
        msg = "trajectory/direction mismatch: a single {} segment is required."
        raise ValueError(msg.format(wanted))
    return np.abs(traj.path(traj.snapshot_times))


def _initial(traj: Trajectory):
    if traj.snapshot_times[0] != 0:
        raise ValueError("C0 can only be measured if the trajectory starts at 0.")
    return traj.snapshots[0]


def _check_hamiltonian(H: Hamiltonian):
    assert isinstance(H, Hamiltonian), "H must be a Hamiltonian instance."
    if H.degenerate_convexity:
        msg = f"curvature estimates are undefined for {H.id}."
        raise DegenerateHamiltonianError(msg)


def check_regularizing(
    traj: Trajectory,
    H: Hamiltonian,
    C0: float | None = None,
    direction: str = "plus",
    classical: bool = False,
    stencil: int | None = None,
):
    """
    verify the regularizing effect along a single-sign 1D trajectory.

    For the plus direction, -W(., t) <= C0 / (1 + C0 t) with t the elapsed
    flow time; for the minus direction the same bound holds for W.

    Parameters
    ----------
    traj: Trajectory
        a trajectory driven by a single up (plus) or down (minus) ramp.

    H: Hamiltonian
        the uniformly convex Hamiltonian of the flow.

    C0: float | None
        the initial one-sided curvature bound (np.inf allowed). If None it
        is measured on the snapshot at t = 0.

    direction: str
        "plus" or "minus".

    classical: bool
        if True, -u_xx (or u_xx) is compared to C0 / (1 + theta C0 t)
        instead, with C0 measured on u_xx.

    stencil: int | None
        the probe stencil, by default probe_stencil(n).

    Returns
    -------
    reports: list of EstimateReport
        one report per snapshot.
    """
    _check_hamiltonian(H)
    elapsed = _elapsed(traj, direction)
    sign = 1 if direction == "plus" else -1
    if stencil is None:
        stencil = probe_stencil(traj.final.grid.n)

    def quantity(u):
        probe = curvature_w(u, H, stencil)
        if classical:
            d2 = _second_difference(u.values, u.h, stencil)
            return -sign * d2, probe.h_slack
        return -sign * probe.w_values.values, probe.h_slack

    if C0 is None:
        C0 = max(0.0, float(np.max(quantity(_initial(traj))[0])))
    name = "classical_upper" if classical else "curvature_upper"
    reports = []
    for t, u, dt in zip(traj.snapshot_times, traj.snapshots, elapsed):
        values, slack = quantity(u)
        if classical:
            bound = classical_regularizing_bound(C0, dt, H.theta)
        else:
            bound = regularizing_bound(C0, dt)
        ctx = _path_stats(traj.path, t)
        status, reason = "ok", ""
        if np.isinf(bound):
            status, reason = "skipped", "no_elapsed_time"
        reports += [
            EstimateReport(
                t, name, np.max(values), bound, slack, "upper", ctx, status, reason
            )
        ]
    return reports


def check_propagation(
    traj: Trajectory,
    H: Hamiltonian | QuadraticHamiltonian2D,
    C0: float | None = None,
    direction: str = "plus",
    classical: bool = False,
    stencil: int | None = None,
):
    """
    verify the propagation of one-sided curvature bounds along a
    single-sign trajectory (1D, or 2D with a quadratic Hamiltonian).

    For the plus direction, -W(., t) >= -C0 / (1 - C0 t) with
    C0 = max(0, max W(., 0)); for the minus direction the same bound holds
    for W with C0 = max(0, -min W(., 0)). In 2D the smallest eigenvalue of
    -F D^2u F (or F D^2u F) is checked. Reports past t = 1 / C0 are marked
    vacuous.

    Parameters
    ----------
    traj: Trajectory
        the single-sign trajectory.

    H: Hamiltonian | QuadraticHamiltonian2D
        the Hamiltonian of the flow.

    C0: float | None
        the initial curvature constant. If None it is measured on the
        snapshot at t = 0. Values <= 0 mean the bound is 0.

    direction: str
        "plus" or "minus".

    classical: bool
        1D only: compare -u_xx (or u_xx) to -C0 / (1 - Theta C0 t).

    stencil: int | None
        the probe stencil, by default probe_stencil(n).

    Returns
    -------
    reports: list of EstimateReport
        one report per snapshot.
    """
    elapsed = _elapsed(traj, direction)
    sign = 1 if direction == "plus" else -1
    if traj.is_2d:
        txt = "2D trajectories require a QuadraticHamiltonian2D."
        assert isinstance(H, QuadraticHamiltonian2D), txt
        if classical:
            raise ValueError("classical bounds are available in 1D only.")
        ref = traj.final
        if stencil is None:
            stencil = probe_stencil(min(ref.n1, ref.n2))

        def quantity(u):
            probe = curvature_w_2d(u, H, stencil)
            if sign > 0:
                return -probe.w_max, probe.w_max, probe.h_slack
            return probe.w_min, -probe.w_min, probe.h_slack

    else:
        _check_hamiltonian(H)
        if stencil is None:
            stencil = probe_stencil(traj.final.grid.n)

        def quantity(u):
            probe = curvature_w(u, H, stencil)
            if classical:
                q = -sign * _second_difference(u.values, u.h, stencil)
            else:
                q = -sign * probe.w_values.values
            return float(np.min(q)), float(np.max(-q)), probe.h_slack

    if C0 is None:
        C0 = max(0.0, quantity(_initial(traj))[1])
    name = "classical_lower" if classical else "curvature_lower"
    reports = []
    for t, u, dt in zip(traj.snapshot_times, traj.snapshots, elapsed):
        measured, _, slack = quantity(u)
        if classical:
            bound = classical_propagation_bound(C0, dt, H.Theta)
        else:
            bound = propagation_bound(C0, dt)
        ctx = _path_stats(traj.path, t)
        status, reason = "ok", ""
        if np.isinf(bound):
            status, reason = "vacuous", "past_blow_up_time"
        reports += [
            EstimateReport(
                t, name, measured, bound, slack, "lower", ctx, status, reason
            )
        ]
    return reports


def check_intermittent(
    traj: Trajectory,
    H: Hamiltonian,
    p: Path | None = None,
    stencil: int | None = None,
):
    """
    verify the intermittent curvature bounds along any path:

        -W(., t) <= 1 / (zeta(t) - m(t)),
        -W(., t) >= -1 / (M(t) - zeta(t)),
        |W(., t)| <= max(1 / (zeta(t) - m(t)), 1 / (M(t) - zeta(t))).

    Reports whose denominator vanishes are skipped with reason
    "at_extremum".

    Parameters
    ----------
    traj: Trajectory
        the 1D trajectory.

    H: Hamiltonian
        the uniformly convex Hamiltonian.

    p: Path | None
        the driving path, by default traj.path.

    stencil: int | None
        the probe stencil, by default probe_stencil(n).

    Returns
    -------
    reports: list of EstimateReport
        three reports per snapshot.
    """
    _check_hamiltonian(H)
    p = traj.path if p is None else p
    if stencil is None:
        stencil = probe_stencil(traj.final.grid.n)
    reports = []
    for t, u in zip(traj.snapshot_times, traj.snapshots):
        ctx = _path_stats(p, t)
        probe = curvature_w(u, H, stencil)
        w = probe.w_values.values
        upper, lower = intermittent_bounds(ctx["zeta"], ctx["M"], ctx["m"])
        items = [
            ("curvature_upper", np.max(-w), upper, "upper"),
            ("curvature_lower", np.min(-w), lower, "lower"),
            ("curvature_abs", np.max(np.abs(w)), np.maximum(upper, -lower), "upper"),
        ]
        for name, measured, bound, sense in items:
            status, reason = "ok", ""
            if np.isnan(bound):
                status, reason = "skipped", "at_extremum"
            reports += [
                EstimateReport(
                    t,
                    name,
                    measured,
                    bound,
                    probe.h_slack,
                    sense,
                    ctx,
                    status,
                    reason,
                )
            ]
    return reports


def check_lipschitz_decay(
    traj: Trajectory,
    H: Hamiltonian,
    p: Path | None = None,
):
    """
    verify |u_x(., t)| <= sqrt(2 |u(., t)| / (theta (M(t) - m(t)))).

    The slack is 4 h max(1, bound). Snapshots with M(t) = m(t) are
    skipped with reason "constant_path".

    Raises
    ------
    DegenerateHamiltonianError
        if theta is not positive.
    """
    _check_hamiltonian(H)
    p = traj.path if p is None else p
    reports = []
    for t, u in zip(traj.snapshot_times, traj.snapshots):
        ctx = _path_stats(p, t)
        measured = lipschitz_constant(u)
        if ctx["M"] > ctx["m"]:
            bound = lipschitz_decay_bound(
                u.sup_norm(), H.theta, ctx["M"], ctx["m"]
            )
            status, reason = "ok", ""
        else:
            bound, status, reason = np.inf, "skipped", "constant_path"
        slack = LIPSCHITZ_SLACK_CELLS * u.h * max(1.0, bound if status == "ok" else 1.0)
        reports += [
            EstimateReport(
                t, "lipschitz", measured, bound, slack, "upper", ctx, status, reason
            )
        ]
    return reports


def check_monotonicity(traj: Trajectory, H: Hamiltonian | None = None):
    """
    verify between consecutive snapshots that the maximum does not
    increase, the minimum does not decrease (both exact when H(0) = 0)
    and the Lipschitz constant does not increase (within 4 h).

    Parameters
    ----------
    traj: Trajectory
        any 1D or 2D trajectory.

    H: Hamiltonian | None
        the Hamiltonian. If H(0) != 0 the max/min reports are skipped.

    Returns
    -------
    reports: list of EstimateReport
        three reports per snapshot after the first.
    """
    h0 = 0.0 if H is None else H.h0
    snaps = traj.snapshots
    reports = []
    for k in range(1, len(snaps)):
        t = traj.snapshot_times[k]
        ctx = _path_stats(traj.path, t)
        prev, curr = snaps[k - 1], snaps[k]
        if isinstance(curr, GridFn2D):
            lip_prev, lip_curr = prev.gradient_norm(), curr.gradient_norm()
        else:
            lip_prev, lip_curr = lipschitz_constant(prev), lipschitz_constant(curr)
        exact = 1e-12 * max(1.0, prev.sup_norm())
        status, reason = "ok", ""
        if abs(h0) > 1e-12:
            status, reason = "skipped", "h0_nonzero"
        reports += [
            EstimateReport(
                t,
                "max_nonincrease",
                curr.max(),
                prev.max(),
                exact,
                "upper",
                ctx,
                status,
                reason,
            ),
            EstimateReport(
                t,
                "min_nondecrease",
                curr.min(),
                prev.min(),
                exact,
                "lower",
                ctx,
                status,
                reason,
            ),
            EstimateReport(
                t,
                "lipschitz_nonincrease",
                lip_curr,
                lip_prev,
                LIPSCHITZ_SLACK_CELLS * curr.h,
                "upper",
                ctx,
            ),
        ]
    return reports


def reports_frame(reports: list):
    """
    the reports as a pandas.DataFrame with columns
    t, quantity, measured, bound, slack, pass, zeta, M, m, status, reason.
    """
    columns = [
        "t",
        "quantity",
        "measured",
        "bound",
        "slack",
        "pass",
        "zeta",
        "M",
        "m",
        "status",
        "reason",
    ]
    return pd.DataFrame([i.to_dict() for i in reports], columns=columns)


def summarize_reports(reports: list):
    """
    pass counts of a list of reports.
    """
    checked = [i for i in reports if i.status == "ok"]
    failed = [i for i in checked if not i.passed]
    quantities = sorted(set(i.quantity for i in reports))
    return {
        "n_reports": len(reports),
        "n_checked": len(checked),
        "n_passed": len(checked) - len(failed),
        "n_failed": len(failed),
        "n_skipped": sum(i.status == "skipped" for i in reports),
        "n_vacuous": sum(i.status == "vacuous" for i in reports),
        "all_passed": len(failed) == 0,
        "failed_quantities": sorted(set(i.quantity for i in failed)),
        "quantities": quantities,
    }


def save_reports(reports: list, directory: str):
    """
    write reports.csv and reports_summary.json to directory.
    """
    os.makedirs(directory, exist_ok=True)
    frame = reports_frame(reports)
    frame.to_csv(
        os.path.join(directory, "reports.csv"),
        index=False,
        float_format=FLOAT_FORMAT,
    )
    summary = summarize_reports(reports)
    write_json(os.path.join(directory, "reports_summary.json"), summary)
    logger.info(
        "%d reports saved to %s (%d failed)",
        summary["n_reports"],
        directory,
        summary["n_failed"],
    )
    return summary
