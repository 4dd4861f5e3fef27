# CONJUGATE MODULE


#! IMPORTS


import logging
import warnings
from typing import Callable
import numpy as np
import scipy.linalg as sl
from .utils import ConjugateRangeWarning, NotUniformlyConvexError


__all__ = [
    "Hamiltonian",
    "QuadraticHamiltonian2D",
    "slope_grid",
    "achievable_range",
    "legendre_conjugate",
    "estimate_convexity_bounds",
    "conjugate_quadratic_2d",
    "make_hamiltonian",
    "HAMILTONIANS",
]


logger = logging.getLogger(__name__)


#! CONSTANTS


MIN_SAMPLES = 64

DEFAULT_SAMPLES = 1024


#! FUNCTIONS


def _evaluate(func: Callable, p: np.ndarray):
    """
    evaluate func on the array p, falling back to a node by node loop for
    callables which do not broadcast.
    """
    try:
        out = np.asarray(func(p), dtype=float)
        if out.shape == p.shape:
            return out
    except Exception:
        pass
    return np.array([float(func(i)) for i in p.flatten()]).reshape(p.shape)


def slope_grid(P: float, m: int):
    """
    return the m + 1 symmetric slope nodes on [-P, P] with spacing 2P/m.
    p = 0 is a node whenever m is even.
    """
    dp = 2 * P / m
    return (np.arange(m + 1) - m // 2) * dp


def achievable_range(slopes: np.ndarray, values: np.ndarray):
    """
    velocities q for which the maximizer of p * q - H(p) lies inside the
    slope range. The end chord slopes are extrapolated to the end nodes,
    which is exact for quadratics.
    """
    chords = np.diff(values) / np.diff(slopes)
    if len(chords) < 2:
        return float(chords[0]), float(chords[-1])
    lo = chords[0] - 0.5 * (chords[1] - chords[0])
    hi = chords[-1] + 0.5 * (chords[-1] - chords[-2])
    return float(lo), float(hi)


def legendre_conjugate(
    values: np.ndarray,
    slopes: np.ndarray,
    velocity_grid: np.ndarray,
    q_range: tuple | None = None,
    warn: bool = True,
    return_mask: bool = False,
):
    """
    discrete Legendre-Fenchel transform L(q) = max_k (p_k q - H(p_k)).

    Parameters
    ----------
    values: 1D array
        H sampled on the (sorted) slope nodes. It must be convex as a
        sequence.

    slopes: 1D array
        the sorted slope nodes.

    velocity_grid: 1D array
        the velocities where L is required.

    q_range: tuple | None
        the achievable velocity range. Velocities outside it are clamped
        (the true conjugate is +inf in that direction) and flagged.
        By default the range returned by achievable_range is used.

    warn: bool
        if True, a ConjugateRangeWarning is raised when clamping occurs.

    return_mask: bool
        if True, the boolean mask of the clamped velocities is returned too.

    Returns
    -------
    conj: 1D array
        the conjugate at velocity_grid.

    clamped: 1D array of bool
        returned only if return_mask is True.

    Notes
    -----
    the maximizer of p q - H(p) is nondecreasing in q for convex H, hence
    a single sweep over the sorted velocities costs O(m + len(velocity_grid)).
    """
    txt = "{} must be a 1D array."
    p = np.asarray(slopes, dtype=float)
    hv = np.asarray(values, dtype=float)
    assert p.ndim == 1 and hv.ndim == 1, txt.format("slopes and values")
    assert len(p) == len(hv), "slopes and values must have the same length."
    assert np.all(np.diff(p) > 0), "slopes must be strictly increasing."
    q = np.atleast_1d(np.asarray(velocity_grid, dtype=float))
    assert q.ndim == 1, txt.format("velocity_grid")

    # clamp to the achievable range
    lo, hi = achievable_range(p, hv) if q_range is None else q_range
    scale = max(1.0, abs(lo), abs(hi))
    clamped = (q < lo - 1e-12 * scale) | (q > hi + 1e-12 * scale)
    if np.any(clamped):
        msg = f"{int(np.sum(clamped))} velocities outside [{lo:.6g}, {hi:.6g}]"
        msg += " have been clamped."
        if warn:
            warnings.warn(msg, ConjugateRangeWarning, stacklevel=2)
        logger.debug(msg)
    qc = np.clip(q, lo, hi)

    # monotone maximizer sweep
    order = np.argsort(qc, kind="stable")
    out = np.empty_like(qc)
    k = 0
    last = len(p) - 1
    for i in order:
        qi = qc[i]
        while k < last and p[k + 1] * qi - hv[k + 1] >= p[k] * qi - hv[k]:
            k += 1
        out[i] = p[k] * qi - hv[k]
    if return_mask:
        return out, clamped
    return out


def estimate_convexity_bounds(
    H: Callable,
    P: float,
    m: int = DEFAULT_SAMPLES,
):
    """
    certify the convexity bounds theta <= H'' <= Theta on [-P, P].

    Parameters
    ----------
    H: callable
        the Hamiltonian.

    P: float
        the slope half-range.

    m: int
        the number of slope intervals (m >= 64).

    Returns
    -------
    theta, Theta: float
        min and max of the centered second difference quotients of H.

    Raises
    ------
    NotUniformlyConvexError
        if theta <= 0.
    """
    assert isinstance(m, (int, np.integer)), "m must be an int."
    if m < MIN_SAMPLES:
        raise ValueError(f"m must be >= {MIN_SAMPLES} (got {m}).")
    if not P > 0:
        raise ValueError(f"P must be positive (got {P}).")
    p = slope_grid(P, m)
    hv = _evaluate(H, p)
    dp = p[1] - p[0]
    d2 = (hv[2:] - 2 * hv[1:-1] + hv[:-2]) / dp**2
    theta, Theta = float(np.min(d2)), float(np.max(d2))
    # round-off of an affine H must not certify convexity
    if theta <= 1e-8 * max(1.0, abs(Theta)):
        msg = f"not uniformly convex on requested range [-{P:g}, {P:g}]"
        raise NotUniformlyConvexError(msg + f" (min H'' = {theta:.6g}).")
    return theta, Theta


def conjugate_quadratic_2d(Q, q):
    """
    closed form conjugate of H(p) = (Ap, p): L(q) = (A^-1 q, q) / 4.
    """
    assert isinstance(Q, QuadraticHamiltonian2D), "Q must be quadratic 2D."
    return Q.conjugate(q)


#! CLASSES


class Hamiltonian:
    """
    convex Hamiltonian of one slope variable with certified convexity
    bounds and a tabulated Legendre-Fenchel conjugate.

    Parameters
    ----------
    func: callable
        H(p). It should broadcast over numpy arrays.

    P: float
        the slope half-range [-P, P] where the solvers query H.

    m: int
        the (even) number of slope intervals used for certification and
        for the conjugate table.

    name: str
        the name of the Hamiltonian family.

    params: dict | None
        the parameters of the family, used for the identifier.

    kind: str
        "convex" for the generic sup-convolution path, "abs" for H = |p|
        (exact windowed extrema) and "linear" for H = v p (transport).

    allow_degenerate: bool
        if True, Hamiltonians which are not uniformly convex are admitted
        with theta = 0 and the degenerate_convexity flag set.
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(
        self,
        func: Callable,
        P: float,
        m: int = DEFAULT_SAMPLES,
        name: str = "custom",
        params: dict | None = None,
        kind: str = "convex",
        allow_degenerate: bool = False,
    ):
        assert callable(func), "func must be callable."
        assert isinstance(name, str), "name must be a str."
        assert kind in ("convex", "abs", "linear"), f"unknown kind {kind}."
        if not (np.isfinite(P) and P > 0):
            raise ValueError(f"P must be a positive real (got {P}).")
        if m < MIN_SAMPLES or m % 2 != 0:
            raise ValueError(f"m must be an even int >= {MIN_SAMPLES}.")
        self._func = func
        self._name = name
        self._params = dict(params or {})
        self._kind = kind
        self._P = float(P)
        self._m = int(m)

        # slope table
        self._slopes = slope_grid(self._P, self._m)
        self._values = _evaluate(func, self._slopes)
        if not np.all(np.isfinite(self._values)):
            raise ValueError("H must be finite on the slope range.")
        dp = self._slopes[1] - self._slopes[0]
        d2 = self._values[2:] - 2 * self._values[1:-1] + self._values[:-2]
        self._d2 = d2 / dp**2

        # convexity certification
        self._degenerate = kind != "convex"
        if not self._degenerate:
            try:
                theta, Theta = estimate_convexity_bounds(
                    func, self._P, self._m
                )
            except NotUniformlyConvexError:
                if not allow_degenerate:
                    raise
                self._degenerate = True
        if self._degenerate:
            scale = max(1.0, float(np.max(np.abs(self._d2))))
            if np.min(self._d2) < -1e-9 * scale:
                raise NotUniformlyConvexError(f"{self.id} is not convex.")
            theta, Theta = 0.0, float(max(np.max(self._d2), 0.0))
            logger.info("%s admitted with degenerate convexity", self.id)
        self._theta = theta
        self._Theta = Theta

        # conjugate table on the velocity range [H'(-P), H'(P)]
        lo, hi = achievable_range(self._slopes, self._values)
        self._q_range = (lo, hi)
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            vel = np.array([0.5 * (lo + hi)])
        elif np.isclose(lo, -hi, rtol=1e-12, atol=0):
            vel = slope_grid(hi, self._m)
        else:
            vel = np.linspace(lo, hi, self._m + 1)
        self._velocities = vel
        self._conj = legendre_conjugate(
            self._values,
            self._slopes,
            vel,
            q_range=self._q_range,
            warn=False,
        )
        if len(vel) > 2:
            dq = np.diff(vel)
            c2 = np.diff(np.diff(self._conj) / dq)
            tol = 1e-9 * max(1.0, float(np.max(np.abs(self._conj))))
            if np.min(c2) < -tol:
                raise ValueError("the conjugate table is not convex.")
        chords = np.diff(self._conj) / np.diff(vel) if len(vel) > 1 else []
        self._conj_chords = np.maximum.accumulate(np.asarray(chords, float))
        logger.debug(
            "%s: theta=%.6g Theta=%.6g velocities=[%.6g, %.6g]",
            self.id,
            self._theta,
            self._Theta,
            lo,
            hi,
        )

    # ****** PROPERTIES ****** #

    @property
    def name(self):
        """the Hamiltonian family name."""
        return self._name

    @property
    def params(self):
        """the family parameters."""
        return dict(self._params)

    @property
    def id(self):
        """an identifier such as quadratic(a=1)."""
        args = ",".join(f"{k}={v:g}" for k, v in self._params.items())
        return f"{self._name}({args})"

    @property
    def kind(self):
        """convex, abs or linear."""
        return self._kind

    @property
    def P(self):
        """the slope half-range."""
        return self._P

    @property
    def m(self):
        """the number of slope intervals."""
        return self._m

    @property
    def theta(self):
        """the certified lower convexity bound (0 if degenerate)."""
        return self._theta

    @property
    def Theta(self):
        """the certified upper convexity bound."""
        return self._Theta

    @property
    def degenerate_convexity(self):
        """True if H is not uniformly convex on the slope range."""
        return self._degenerate

    @property
    def slopes(self):
        """the slope nodes."""
        return self._slopes

    @property
    def velocities(self):
        """the velocity nodes of the conjugate table."""
        return self._velocities

    @property
    def conjugate_table(self):
        """L at the velocity nodes."""
        return self._conj

    @property
    def velocity_range(self):
        """[H'(-P), H'(P)]."""
        return self._q_range

    @property
    def max_speed(self):
        """max |H'| on the slope range, i.e. the Lipschitz constant of H."""
        return float(max(abs(self._q_range[0]), abs(self._q_range[1])))

    @property
    def tol_conj(self):
        """the conjugate tolerance Theta * (2P/m)^2."""
        return self._Theta * (2 * self._P / self._m) ** 2

    @property
    def h0(self):
        """H(0)."""
        return float(_evaluate(self._func, np.array([0.0]))[0])

    # ****** METHODS ****** #

    def __call__(self, p):
        return _evaluate(self._func, np.asarray(p, dtype=float))

    def __repr__(self):
        return f"Hamiltonian({self.id}, P={self._P:g}, m={self._m})"

    def conjugate(self, q, warn: bool = True):
        """
        L(q) by linear interpolation of the conjugate table. Velocities
        outside the table are clamped and flagged.
        """
        q = np.asarray(q, dtype=float)
        lo, hi = self._q_range
        scale = max(1.0, abs(lo), abs(hi))
        out = (q < lo - 1e-12 * scale) | (q > hi + 1e-12 * scale)
        if warn and np.any(out):
            msg = "conjugate queried outside [{:.6g}, {:.6g}]".format(lo, hi)
            warnings.warn(msg, ConjugateRangeWarning, stacklevel=2)
        if len(self._velocities) == 1:
            return np.full(q.shape, self._conj[0])
        return np.interp(q, self._velocities, self._conj)

    def optimal_velocity(self, p):
        """
        the table velocity q maximizing p q - L(q), i.e. H'(p) on the
        conjugate table, together with L(q).

        Parameters
        ----------
        p: array-like
            the slopes.

        Returns
        -------
        q, L: arrays
            the maximizing velocity nodes and the table values there.
        """
        p = np.asarray(p, dtype=float)
        if len(self._velocities) == 1:
            q = np.full(p.shape, self._velocities[0])
            return q, np.full(p.shape, self._conj[0])
        k = np.searchsorted(self._conj_chords, p, side="left")
        return self._velocities[k], self._conj[k]

    def second_derivative(self, p):
        """
        H''(p) interpolated from the certified second difference table.
        """
        p = np.clip(np.asarray(p, dtype=float), -self._P, self._P)
        return np.interp(p, self._slopes[1:-1], self._d2)

    def biconjugate(self):
        """
        re-conjugate the conjugate table on the slope nodes.
        """
        if len(self._velocities) == 1:
            return self._slopes * self._velocities[0] - self._conj[0]
        return legendre_conjugate(
            self._conj,
            self._velocities,
            self._slopes,
            q_range=(-self._P, self._P),
            warn=False,
        )

    def fenchel_young_gap(self):
        """
        min over the table nodes of H(p) + L(q) - p q (>= -tol_conj).
        """
        gap = self._values[:, None] + self._conj[None, :]
        gap -= self._slopes[:, None] * self._velocities[None, :]
        return float(np.min(gap))

    def to_dict(self):
        """return the JSON-ready description of the Hamiltonian."""
        return {
            "name": self._name,
            "params": self.params,
            "P": self._P,
            "m": self._m,
        }


class QuadraticHamiltonian2D:
    """
    quadratic Hamiltonian H(p) = (Ap, p) on R^2.

    Parameters
    ----------
    a11, a12, a22: float
        the entries of the symmetric positive definite matrix A.
    """

    # ****** CONSTRUCTOR ****** #

    def __init__(self, a11: float, a12: float, a22: float):
        self._a = np.array([[a11, a12], [a12, a22]], dtype=float)
        if not np.all(np.isfinite(self._a)):
            raise ValueError("A must be finite.")
        if not (a11 > 0 and a11 * a22 - a12**2 > 0):
            raise ValueError("A must be symmetric positive definite.")
        det = a11 * a22 - a12**2
        self._inv = np.array([[a22, -a12], [-a12, a11]]) / det
        eig = np.linalg.eigvalsh(self._a)
        self._theta = float(2 * eig[0])
        self._Theta = float(2 * eig[1])
        self._F = np.real(sl.sqrtm(2 * self._a))

    # ****** PROPERTIES ****** #

    @property
    def A(self):
        """the matrix A."""
        return self._a.copy()

    @property
    def A_inv(self):
        """the inverse of A."""
        return self._inv.copy()

    @property
    def F(self):
        """F = sqrt(D^2 H) = sqrt(2A)."""
        return self._F.copy()

    @property
    def theta(self):
        """the smallest eigenvalue of D^2 H = 2A."""
        return self._theta

    @property
    def Theta(self):
        """the largest eigenvalue of D^2 H = 2A."""
        return self._Theta

    @property
    def degenerate_convexity(self):
        """quadratic Hamiltonians are never degenerate."""
        return False

    @property
    def id(self):
        """an identifier such as quadratic2d(a11=1,a12=0,a22=1)."""
        a = self._a
        return f"quadratic2d(a11={a[0, 0]:g},a12={a[0, 1]:g},a22={a[1, 1]:g})"

    @property
    def h0(self):
        """H(0)."""
        return 0.0

    # ****** METHODS ****** #

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return np.einsum("...i,ij,...j->...", p, self._a, p)

    def __repr__(self):
        return f"QuadraticHamiltonian2D({self.id})"

    def conjugate(self, q):
        """L(q) = (A^-1 q, q) / 4."""
        q = np.asarray(q, dtype=float)
        return 0.25 * np.einsum("...i,ij,...j->...", q, self._inv, q)

    def max_speed(self, P: float):
        """max |DH(p)| = 2 |A p| over |p| <= P."""
        return self._Theta * P

    def to_dict(self):
        """return the JSON-ready description of the Hamiltonian."""
        return {
            "name": "quadratic2d",
            "params": {
                "a11": float(self._a[0, 0]),
                "a12": float(self._a[0, 1]),
                "a22": float(self._a[1, 1]),
            },
        }


#! FACTORY


HAMILTONIANS = {
    "quadratic": ("a",),
    "quartic": ("a", "b"),
    "abs": (),
    "linear": ("v",),
    "quadratic2d": ("a11", "a12", "a22"),
}


def make_hamiltonian(
    name: str,
    params: dict | list | tuple | None = None,
    P: float = 1.0,
    m: int = DEFAULT_SAMPLES,
):
    """
    build a Hamiltonian from its name and parameters.

    Parameters
    ----------
    name: str
        one of "quadratic" (a p^2 / 2), "quartic" (a p^2 / 2 + b p^4 / 4),
        "abs" (|p|), "linear" (v p) or "quadratic2d" ((Ap, p)).

    params: dict | list | tuple | None
        the parameters, by name or by position.

    P: float
        the slope half-range (ignored by quadratic2d).

    m: int
        the number of slope intervals (ignored by quadratic2d).

    Returns
    -------
    H: Hamiltonian | QuadraticHamiltonian2D
        the requested Hamiltonian.
    """
    if name not in HAMILTONIANS:
        raise ValueError(f"unknown Hamiltonian {name!r}.")
    keys = HAMILTONIANS[name]
    if params is None:
        params = {}
    if isinstance(params, (list, tuple)):
        if len(params) != len(keys):
            raise ValueError(f"{name} requires the parameters {keys}.")
        params = dict(zip(keys, params))
    unknown = set(params) - set(keys)
    missing = set(keys) - set(params)
    if unknown or missing:
        msg = f"{name} requires the parameters {keys} "
        raise ValueError(msg + f"(unknown: {sorted(unknown)}, missing: {sorted(missing)}).")
    par = {k: float(params[k]) for k in keys}

    if name == "quadratic":
        a = par["a"]
        if a <= 0:
            raise ValueError("quadratic requires a > 0.")
        return Hamiltonian(lambda p: 0.5 * a * p**2, P, m, name, par)
    if name == "quartic":
        a, b = par["a"], par["b"]
        if a <= 0 or b < 0:
            raise ValueError("quartic requires a > 0 and b >= 0.")
        return Hamiltonian(
            lambda p: 0.5 * a * p**2 + 0.25 * b * p**4, P, m, name, par
        )
    if name == "abs":
        return Hamiltonian(np.abs, P, m, name, par, "abs", True)
    if name == "linear":
        v = par["v"]
        return Hamiltonian(lambda p: v * p, P, m, name, par, "linear", True)
    return QuadraticHamiltonian2D(par["a11"], par["a12"], par["a22"])
