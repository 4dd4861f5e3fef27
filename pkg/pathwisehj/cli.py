# CLI MODULE


#! IMPORTS


import argparse
import copy
import logging
import os
import sys
import numpy as np
from .conjugate import Hamiltonian, QuadraticHamiltonian2D, make_hamiltonian
from .estimates import (
    EstimateReport,
    check_intermittent,
    check_lipschitz_decay,
    check_monotonicity,
    check_propagation,
    check_regularizing,
    reports_frame,
    save_reports,
)
from .experiments import (
    LimitEnsemble,
    deterministic_limit,
    make_initial,
    make_initial_2d,
    random_limit_montecarlo,
)
from .grid1d import PeriodicGrid1D
from .hopflax import default_slope_range
from .pathwise import (
    Trajectory,
    solve_monotone_scheme,
    solve_pathwise,
    solve_pathwise_quadratic_2d,
)
from .paths import Path, monotone_segments, piecewise_linear, ramp, sample_brownian
from .utils import ConfigError, PathwiseError, SolverRefusal, get_time, read_json, write_json


__all__ = [
    "DEFAULTS",
    "CHECKS",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_REFUSAL",
    "EXIT_FAILED",
    "ExperimentConfig",
    "build_problem",
    "run_checks",
    "verify_trajectory",
    "cmd_solve",
    "cmd_verify",
    "cmd_montecarlo",
    "main",
]


logger = logging.getLogger(__name__)


#! CONSTANTS


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFUSAL = 3
EXIT_FAILED = 4

PATH_KINDS = ("ramp", "zigzag", "brownian")

ENSEMBLE_KINDS = ("brownian", "ramp")

CHECKS = (
    "monotonicity",
    "regularizing",
    "propagation",
    "intermittent",
    "lipschitz",
    "classical",
    "oracle",
)

# checks that need a uniformly convex Hamiltonian
CURVATURE_CHECKS = ("regularizing", "propagation", "intermittent", "lipschitz", "classical")

# the resolved configuration of a run: every key that may appear in a
# config file, with its default
DEFAULTS = {
    "grid": {"n": 512, "period": 1.0, "n2": None, "period2": None},
    "hamiltonian": {"name": "quadratic", "params": {"a": 1.0}, "m": 1024, "P": None},
    "initial": {"name": "cos", "params": {}},
    "path": {
        "kind": "ramp",
        "slope": 1.0,
        "T": 1.0,
        "points": None,
        "seed": 0,
        "dt": 1e-3,
    },
    "times": None,
    "tolerances": {
        "eps_conv": 1e-2,
        "merge_tol": None,
        "coalesce": True,
        "cfl": 0.4,
        "oracle_tol": 0.02,
    },
    "checks": ["monotonicity", "intermittent", "lipschitz"],
    "montecarlo": {
        "kind": "brownian",
        "n_paths": 500,
        "seed0": 0,
        "T": 4.0,
        "dt": 1e-3,
        "grid_n": 256,
        "slope": 1.0,
    },
    "output": {"directory": "results"},
}


#! CLASSES


class ExperimentConfig:
    """
    validated experiment configuration.

    Parameters
    ----------
    config: dict
        the (possibly partial) configuration. Missing keys take the DEFAULTS
        values; unknown keys at any level raise ConfigError.

    Attributes
    ----------
    grid, hamiltonian, initial, path, tolerances, montecarlo, output: dict
        the resolved sections.

    times: list | None
        the record times.

    checks: list
        the checks run by cmd_verify.
    """

    def __init__(self, config: dict | None = None):
        resolved = _merge(DEFAULTS, {} if config is None else config, "config")
        self._config = resolved
        for key, value in resolved.items():
            setattr(self, key, value)
        self._validate()

    @classmethod
    def from_dict(cls, config: dict):
        """build the configuration from a dict."""
        if not isinstance(config, dict):
            raise ConfigError("the configuration must be a JSON object.")
        return cls(config)

    @classmethod
    def from_file(cls, path: str):
        """read the configuration from a JSON file."""
        try:
            config = read_json(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.from_dict(config)

    def to_dict(self):
        """the fully resolved configuration, defaults included."""
        return copy.deepcopy(self._config)

    def override(self, seed: int | None = None, n: int | None = None, out: str | None = None):
        """return a copy with the command line overrides applied."""
        config = self.to_dict()
        if seed is not None:
            config["path"]["seed"] = int(seed)
            config["montecarlo"]["seed0"] = int(seed)
        if n is not None:
            config["grid"]["n"] = int(n)
        if out is not None:
            config["output"]["directory"] = str(out)
        return ExperimentConfig(config)

    @property
    def is_2d(self):
        """True if the Hamiltonian is the 2D quadratic one."""
        return self.hamiltonian["name"] == "quadratic2d"

    def __repr__(self):
        return "ExperimentConfig({}, {}, n={})".format(
            self.hamiltonian["name"], self.path["kind"], self.grid["n"]
        )

    def _validate(self):
        grid = self.grid
        if not isinstance(grid["n"], int) or grid["n"] < 8:
            raise ConfigError(f"grid.n must be an integer >= 8 (got {grid['n']}).")
        if not _positive(grid["period"]):
            raise ConfigError("grid.period must be positive.")
        if grid["n2"] is not None and (not isinstance(grid["n2"], int) or grid["n2"] < 8):
            raise ConfigError("grid.n2 must be an integer >= 8.")
        if grid["period2"] is not None and not _positive(grid["period2"]):
            raise ConfigError("grid.period2 must be positive.")

        ham = self.hamiltonian
        if not isinstance(ham["params"], dict):
            raise ConfigError("hamiltonian.params must be an object.")
        if ham["P"] is not None and not _positive(ham["P"]):
            raise ConfigError("hamiltonian.P must be positive.")

        path = self.path
        if path["kind"] not in PATH_KINDS:
            raise ConfigError(f"path.kind must be one of {PATH_KINDS}.")
        if path["kind"] == "zigzag":
            if not isinstance(path["points"], list) or len(path["points"]) < 2:
                raise ConfigError("path.points must list at least two [t, v] pairs.")
        elif not _positive(path["T"]):
            raise ConfigError("path.T must be positive.")
        if path["kind"] == "brownian" and not _positive(path["dt"]):
            raise ConfigError("path.dt must be positive.")

        if self.times is not None and not isinstance(self.times, list):
            raise ConfigError("times must be a list of reals or null.")

        tol = self.tolerances
        if not (isinstance(tol["cfl"], (int, float)) and 0 < tol["cfl"] <= 0.5):
            raise ConfigError("tolerances.cfl must be in (0, 0.5].")
        if not _positive(tol["eps_conv"]):
            raise ConfigError("tolerances.eps_conv must be positive.")
        if not _positive(tol["oracle_tol"]):
            raise ConfigError("tolerances.oracle_tol must be positive.")
        if not isinstance(tol["coalesce"], bool):
            raise ConfigError("tolerances.coalesce must be true or false.")

        if not isinstance(self.checks, list):
            raise ConfigError("checks must be a list.")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks {sorted(unknown)}; allowed: {CHECKS}.")

        mc = self.montecarlo
        if mc["kind"] not in ENSEMBLE_KINDS:
            raise ConfigError(f"montecarlo.kind must be one of {ENSEMBLE_KINDS}.")
        if not isinstance(mc["n_paths"], int) or mc["n_paths"] < 1:
            raise ConfigError(f"montecarlo.n_paths must be >= 1 (got {mc['n_paths']}).")
        if mc["kind"] == "brownian" and mc["n_paths"] < 100:
            raise ConfigError("brownian ensembles require montecarlo.n_paths >= 100.")
        if not isinstance(mc["grid_n"], int) or mc["grid_n"] < 8:
            raise ConfigError("montecarlo.grid_n must be an integer >= 8.")
        if not (_positive(mc["T"]) and _positive(mc["dt"])):
            raise ConfigError("montecarlo.T and montecarlo.dt must be positive.")


#! FUNCTIONS


def _positive(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0


def _merge(defaults, config, where: str):
    """
    overlay config onto defaults, raising ConfigError on unknown keys.
    Only the sections whose default is a dict are merged key by key, and
    params are dropped when name changes without new params.
    """
    if not isinstance(config, dict):
        raise ConfigError(f"{where} must be an object.")
    unknown = set(config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}.")
    out = copy.deepcopy(defaults)
    for key, value in config.items():
        if isinstance(defaults[key], dict) and key != "params":
            out[key] = _merge(defaults[key], value, f"{where}.{key}")
        else:
            out[key] = copy.deepcopy(value)
    # the parameters of a family do not carry over to another one
    renamed = "name" in config and config["name"] != defaults.get("name")
    if renamed and "params" in defaults and "params" not in config:
        out["params"] = {}
    return out


def _make_path(options: dict):
    kind = options["kind"]
    if kind == "ramp":
        return ramp(float(options["slope"]), float(options["T"]))
    if kind == "zigzag":
        prov = {"kind": "zigzag", "points": options["points"]}
        return piecewise_linear(options["points"], prov)
    return sample_brownian(int(options["seed"]), float(options["T"]), float(options["dt"]))


def build_problem(config: ExperimentConfig):
    """
    build the initial datum, the Hamiltonian and the path of a run.

    Returns
    -------
    u0: GridFn | GridFn2D
        the initial datum.

    H: Hamiltonian | QuadraticHamiltonian2D
        the Hamiltonian.

    p: Path
        the driving path.

    Raises
    ------
    ConfigError
        if any of them cannot be built from the configuration.
    """
    try:
        grid = config.grid
        ham = config.hamiltonian
        if config.is_2d:
            n2 = grid["n"] if grid["n2"] is None else grid["n2"]
            period2 = grid["period"] if grid["period2"] is None else grid["period2"]
            u0 = make_initial_2d(
                config.initial["name"],
                config.initial["params"],
                grid["n"],
                n2,
                grid["period"],
                period2,
            )
            H = make_hamiltonian("quadratic2d", ham["params"])
        else:
            g = PeriodicGrid1D(grid["n"], float(grid["period"]))
            u0 = make_initial(config.initial["name"], config.initial["params"], g)
            P = default_slope_range(u0) if ham["P"] is None else float(ham["P"])
            H = make_hamiltonian(ham["name"], ham["params"], P, int(ham["m"]))
        p = _make_path(config.path)
    except (ValueError, AssertionError) as exc:
        raise ConfigError(str(exc)) from exc
    return u0, H, p


def _solve(config: ExperimentConfig):
    u0, H, p = build_problem(config)
    tol = config.tolerances
    try:
        if config.is_2d:
            P = config.hamiltonian["P"]
            traj = solve_pathwise_quadratic_2d(
                u0, H, p, config.times, P, tol["merge_tol"], tol["coalesce"]
            )
        else:
            traj = solve_pathwise(
                u0, H, p, config.times, tol["merge_tol"], tol["coalesce"]
            )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return traj, H


def _single_sign(p: Path):
    """'plus' or 'minus' for a single monotone segment, else None."""
    segments = monotone_segments(p)
    if len(segments) != 1:
        return None
    return "plus" if segments[0].direction == "up" else "minus"


def _skipped(traj: Trajectory, name: str, reason: str):
    nan = float("nan")
    return [
        EstimateReport(
            traj.path.T, name, nan, nan, 0.0, status="skipped", reason=reason
        )
    ]


def _oracle_report(traj: Trajectory, H: Hamiltonian, tolerances: dict):
    """
    sup distance between the final snapshot and the Godunov monotone scheme
    run from the initial snapshot along the same path.
    """
    u0 = traj.snapshots[0]
    if traj.snapshot_times[0] != 0:
        return _skipped(traj, "oracle", "no_initial_snapshot")
    p = traj.path.restrict(float(traj.snapshot_times[-1]))
    v = solve_monotone_scheme(u0, H, p, tolerances["cfl"], "godunov")
    distance = float(np.max(np.abs(traj.final.values - v.values)))
    return [
        EstimateReport(
            traj.snapshot_times[-1],
            "oracle_distance",
            distance,
            0.0,
            tolerances["oracle_tol"],
            "upper",
        )
    ]


def run_checks(
    traj: Trajectory,
    H: Hamiltonian | QuadraticHamiltonian2D,
    checks,
    tolerances: dict | None = None,
):
    """
    run the requested checks that apply to the trajectory.

    Checks that do not apply (a curvature check with a degenerate H, a
    single-sign check on a path that changes direction, a 1D check on a 2D
    trajectory) give one skipped report naming the reason.

    Returns
    -------
    reports: list of EstimateReport
        the reports in the order of CHECKS.
    """
    if tolerances is None:
        tolerances = DEFAULTS["tolerances"]
    checks = [i for i in CHECKS if i in set(checks)]
    direction = _single_sign(traj.path)
    degenerate = H.degenerate_convexity
    reports = []
    for name in checks:
        if name == "monotonicity":
            reports += check_monotonicity(traj, H)
            continue
        if degenerate and name in CURVATURE_CHECKS:
            logger.warning("%s check skipped: %s is degenerate", name, H.id)
            reports += _skipped(traj, name, "degenerate_hamiltonian")
            continue
        if traj.is_2d and name != "propagation":
            reports += _skipped(traj, name, "one_dimensional_only")
            continue
        if name in ("regularizing", "propagation", "classical") and direction is None:
            logger.warning("%s check skipped: the path changes direction", name)
            reports += _skipped(traj, name, "path_not_single_sign")
            continue
        if name == "regularizing":
            reports += check_regularizing(traj, H, direction=direction)
        elif name == "propagation":
            reports += check_propagation(traj, H, direction=direction)
        elif name == "classical":
            reports += check_regularizing(traj, H, direction=direction, classical=True)
            reports += check_propagation(traj, H, direction=direction, classical=True)
        elif name == "intermittent":
            reports += check_intermittent(traj, H)
        elif name == "lipschitz":
            reports += check_lipschitz_decay(traj, H)
        elif name == "oracle":
            reports += _oracle_report(traj, H, tolerances)
    return reports


def _output(config: ExperimentConfig):
    directory = config.output["directory"]
    os.makedirs(directory, exist_ok=True)
    return directory


def cmd_solve(config: ExperimentConfig):
    """
    solve and write the trajectory directory (manifest.json, path.csv,
    snapshot_XXX.csv).
    """
    tic = get_time()
    traj, _ = _solve(config)
    directory = _output(config)
    traj.save(directory, config.to_dict())
    logger.info("solve: %s written to %s in %s", traj, directory, get_time(tic))
    return EXIT_OK


def verify_trajectory(
    traj: Trajectory,
    H: Hamiltonian | QuadraticHamiltonian2D,
    config: ExperimentConfig,
):
    """
    run the configured checks on traj, write reports.csv and
    reports_summary.json and return the exit code.
    """
    reports = run_checks(traj, H, config.checks, config.tolerances)
    summary = save_reports(reports, _output(config))
    if not summary["all_passed"]:
        frame = reports_frame(reports)
        failed = frame.loc[(frame["status"] == "ok") & ~frame["pass"]]
        logger.error("%d reports failed:\n%s", len(failed), failed.to_string(index=False))
        return EXIT_FAILED
    return EXIT_OK


def cmd_verify(config: ExperimentConfig):
    """
    solve, save the trajectory and run the configured checks. The exit
    code is 4 if any checked report fails.
    """
    traj, H = _solve(config)
    traj.save(_output(config), config.to_dict())
    return verify_trajectory(traj, H, config)


def cmd_montecarlo(config: ExperimentConfig):
    """
    build the ensemble of long-time limits and write ensemble.csv,
    summary.json and manifest.json. Brownian ensembles exit with 4 if a
    statistical threshold is missed.
    """
    mc = config.montecarlo
    directory = _output(config)
    if mc["kind"] == "brownian":
        ensemble = random_limit_montecarlo(
            n_paths=mc["n_paths"],
            seed0=mc["seed0"],
            T=float(mc["T"]),
            dt=float(mc["dt"]),
            grid_n=mc["grid_n"],
            eps_conv=float(config.tolerances["eps_conv"]),
        )
    else:
        grid = PeriodicGrid1D(mc["grid_n"], 2.0)
        u0 = make_initial("sawtooth", {"slope": 1.0}, grid)
        H = make_hamiltonian("abs", P=1.0)
        limit = deterministic_limit(u0, H, ramp(float(mc["slope"]), float(mc["T"])))
        seeds = np.arange(mc["seed0"], mc["seed0"] + mc["n_paths"])
        ensemble = LimitEnsemble(seeds, np.full(len(seeds), limit), params=dict(mc))
    summary = ensemble.save(directory)
    write_json(os.path.join(directory, "manifest.json"), {"config": config.to_dict()})
    if mc["kind"] == "brownian" and not summary["all_passed"]:
        logger.error("montecarlo thresholds missed: %s", summary["pass"])
        return EXIT_FAILED
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "montecarlo": cmd_montecarlo,
}


def _parser():
    parser = argparse.ArgumentParser(
        prog="pathwisehj",
        description="pathwise Hamilton-Jacobi experiments",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="the command to run")
    parser.add_argument("--config", type=str, default=None, help="JSON configuration file")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--n", type=int, default=None, help="grid size override")
    parser.add_argument("--quiet", action="store_true", help="log warnings only")
    return parser


def main(argv: list | None = None):
    """
    command line entry point.

    Returns
    -------
    code: int
        0 on success, 2 on configuration errors, 3 on solver refusals and 4
        if a check failed.
    """
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.config is None:
            config = ExperimentConfig()
        else:
            config = ExperimentConfig.from_file(args.config)
        config = config.override(args.seed, args.n, args.out)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except SolverRefusal as exc:
        logger.error("solver refused: %s", exc)
        return EXIT_REFUSAL
    except PathwiseError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
