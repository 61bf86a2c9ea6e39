"""Fixed points, the critical surface and the supercritical growth constant.

Everything here concerns the binary case ``K = 2`` with the two-class
coupling ``b``.  A fixed point of the map satisfies
``u = (p0 + p2 v^2) / (p0 + p2)`` with ``v`` a root of

    P(v) = A v^2 - v + C,   A = p2 (b - 1) + p2 / (p0 + p2),  C = p0 / (p0 + p2),

and the critical coupling is where the discriminant ``1 - 4 A C`` vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rec_kernels as rk
from .model import OffspringDist, ParameterError
from .recursion import RecursionOverflow, df_map, run


class SupercriticalError(ArithmeticError):
    """The requested quantity does not exist in the supercritical regime."""


class ConvergenceError(ArithmeticError):
    """An iteration neither converged nor diverged within its budget."""


def _binary(dist):
    dist = dist if isinstance(dist, OffspringDist) else OffspringDist(dist)
    if dist.K != 2:
        raise ParameterError("closed forms are available for K = 2 only")
    return dist


# --- critical surface ---------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    p0: float
    p2: float
    beta_c: float
    b_c: float

    @property
    def p1(self):
        return 1.0 - self.p0 - self.p2


def in_triangle(p0, p2, tol=1e-12):
    """``p2 >= 0``, ``p0 + p2 <= 1`` and ``p2 <= p0``."""
    return p2 >= -tol and p0 + p2 <= 1 + tol and p2 - p0 <= tol


def beta_c(p0, p2) -> CriticalPoint:
    """Closed-form critical coupling for ``p = (p0, 1 - p0 - p2, p2)``."""
    if p0 < p2 and p0 >= 0 and p0 + p2 <= 1:
        raise SupercriticalError("no finite beta_c: free BGW supercritical")
    if not in_triangle(p0, p2) or p0 < 0:
        raise ParameterError(f"(p0, p2) = ({p0}, {p2}) lies outside the admissible triangle")
    if p2 <= 0:
        raise ParameterError("p2 = 0: the critical coupling diverges")
    s = p0 + p2
    b = 1.0 if p0 == p2 else max(1.0 + s / (4.0 * p0 * p2) - 1.0 / s, 1.0)
    return CriticalPoint(float(p0), float(p2), math.log(b), b)


def scan_surface(p0_values, p2_values):
    """Closed-form ``beta_c`` over a grid; returns ``(rows, skipped)``.

    ``rows`` are :class:`CriticalPoint`; ``skipped`` lists ``(p0, p2, reason)``.
    """
    rows, skipped = [], []
    for p0 in p0_values:
        for p2 in p2_values:
            try:
                rows.append(beta_c(float(p0), float(p2)))
            except (ParameterError, SupercriticalError) as exc:
                skipped.append((float(p0), float(p2), str(exc)))
    return rows, skipped


# --- fixed points -----------------------------------------------------------

@dataclass(frozen=True)
class FixedPointResult:
    exists: bool
    u: float
    v: float
    double_root: bool
    spectral_radius: float
    discriminant: float
    reason: str = ""


def fixed_point(dist, b, tol=1e-12) -> FixedPointResult:
    """Fixed point reached from ``(1, 1)``: the smaller root of ``P``."""
    dist = _binary(dist)
    if b < 1:
        raise ParameterError("fixed_point requires b >= 1")
    p0, _, p2 = (float(q) for q in dist.probs)
    nan = math.nan
    if p0 < p2 and b > 1:
        return FixedPointResult(False, nan, nan, False, nan, nan, "supercritical")
    s = p0 + p2
    A = p2 * (b - 1.0) + p2 / s
    C = p0 / s
    disc = 1.0 - 4.0 * A * C
    if disc < -tol:
        return FixedPointResult(False, nan, nan, False, nan, disc, "supercritical")
    double = abs(disc) <= tol
    v = 2.0 * C / (1.0 + math.sqrt(max(disc, 0.0)))
    u = (p0 + p2 * v * v) / s
    radius = float(np.max(np.abs(np.linalg.eigvals(df_map((u, v), dist, b)))))
    return FixedPointResult(True, u, v, double, radius, disc)


def critical_fixed_point(p0, p2):
    """``(u*, v*)`` at the double root: ``v = 2 p0/(p0+p2)``."""
    s = p0 + p2
    return p0 / s + 4 * p0 * p0 * p2 / s ** 3, 2 * p0 / s


@dataclass(frozen=True)
class Approach:
    steps: int
    u: float
    v: float
    distance: float
    reached: bool


def approach_fixed_point(dist, b, target, tol, n_max) -> Approach:
    """Iterate from ``(1, 1)`` until within ``tol`` of ``target`` (sup norm)."""
    dist = _binary(dist)
    tu, tv = target
    k, u, v = rk.approach(dist.probs, float(b), 1.0, 1.0, float(tu), float(tv), float(tol), int(n_max))
    d = max(abs(u - tu), abs(v - tv))
    return Approach(int(k), float(u), float(v), d, d < tol)


# --- empirical criticality ------------------------------------------------------

@dataclass(frozen=True)
class BracketResult:
    lo: float
    hi: float
    estimate: float
    evaluations: int


def classify(dist, b, n_max=10_000_000, tol=1e-13, vmax=1e6):
    """1 for a convergent orbit from ``(1, 1)``, -1 for a divergent one."""
    dist = dist if isinstance(dist, OffspringDist) else OffspringDist(dist)
    code, _ = rk.classify_orbit(dist.probs, float(b), 1.0, 1.0, int(n_max), tol, vmax)
    if code == 0:
        raise ConvergenceError(f"orbit at b={b!r} undecided after {n_max} steps")
    return int(code)


def empirical_criticality(dist, x=1, lo=1.0, hi=2.0, width=1e-6, n_max=10_000_000,
                          tol=1e-13, vmax=1e6) -> BracketResult:
    """Bisect ``[lo, hi]`` for the change from convergent to divergent orbits.

    Both boundary partition functions share the same orbit, so ``x`` only
    selects which coordinate is reported and does not move the transition.
    """
    if not 1 <= x <= 2:
        raise ParameterError("x must be 1 or 2 for K = 2")
    dist = dist if isinstance(dist, OffspringDist) else OffspringDist(dist)
    clo = classify(dist, lo, n_max, tol, vmax)
    chi = classify(dist, hi, n_max, tol, vmax)
    evals = 2
    if clo == chi:
        raise ParameterError(f"no sign change on [{lo}, {hi}]: both ends "
                             + ("convergent" if clo == 1 else "divergent"))
    if clo == -1:
        # divergent below the transition is not the studied orientation
        raise ParameterError(f"orbit diverges at the lower end b={lo}")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if classify(dist, mid, n_max, tol, vmax) == 1:
            lo = mid
        else:
            hi = mid
        evals += 1
    return BracketResult(lo, hi, 0.5 * (lo + hi), evals)


# --- least-squares fits -----------------------------------------------------

FIT_MODELS = ("powerlaw", "gamma_delta", "log_linear")


@dataclass(frozen=True)
class FitResult:
    model: str
    coefficients: dict
    rms: float
    n_points: int
    residuals: np.ndarray = field(repr=False)


def fit(x, y, model) -> FitResult:
    """Ordinary least squares on transformed coordinates.

    ``powerlaw``: ``log y = log(prefactor) + exponent log x``;
    ``gamma_delta``: ``y = gamma - delta / x``;
    ``log_linear``: ``y = intercept + slope log(x - 1)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("x and y must be 1-d arrays of equal length")
    if x.size < 3:
        raise ParameterError("fit needs at least 3 points")
    if np.ptp(x) == 0:
        raise ParameterError("singular design: all abscissas equal")
    if model == "powerlaw":
        if np.any(x <= 0) or np.any(y <= 0):
            raise ParameterError("powerlaw needs positive x and y")
        t, z = np.log(x), np.log(y)
    elif model == "gamma_delta":
        if np.any(x == 0):
            raise ParameterError("gamma_delta needs nonzero x")
        t, z = 1.0 / x, y
    elif model == "log_linear":
        if np.any(x <= 1):
            raise ParameterError("log_linear needs x > 1")
        t, z = np.log(x - 1.0), y
    else:
        raise ParameterError(f"unknown model {model!r}; choose from {FIT_MODELS}")
    design = np.column_stack([np.ones_like(t), t])
    (a, c), *_ = np.linalg.lstsq(design, z, rcond=None)
    res = z - (a + c * t)
    rms = float(np.sqrt(np.mean(res * res)))
    if model == "powerlaw":
        coef = {"exponent": float(c), "prefactor": float(math.exp(a))}
    elif model == "gamma_delta":
        coef = {"gamma": float(a), "delta": float(-c)}
    else:
        coef = {"intercept": float(a), "slope": float(c)}
    return FitResult(model, coef, rms, int(x.size), res)


# --- critical scaling -------------------------------------------------------------

@dataclass(frozen=True)
class ScalingResult:
    n: np.ndarray
    meanN: np.ndarray
    b: float
    exponent: float
    fit: FitResult


def critical_scaling(dist, x=1, n_max=100_000, b=None, every=1) -> ScalingResult:
    """Mean number of external nodes along the critical line, with a power-law fit.

    ``b`` defaults to the closed-form critical coupling.  The fit covers the
    top decade ``[n_max/10, n_max]``.
    """
    dist = dist if isinstance(dist, OffspringDist) else OffspringDist(dist)
    if b is None:
        p0, _, p2 = _binary(dist).probs
        b = beta_c(p0, p2).b_c
    try:
        traj = run(dist, b, n_max + 1, ("leaves",), every=every)
    except RecursionOverflow as exc:
        raise SupercriticalError(f"overflow after {exc.last_step} steps: not on the critical line") from exc
    obs = traj.observables(min(x, 2))
    n, meanN = obs["n"], obs["meanN"]
    keep = n >= 1
    n, meanN = n[keep], meanN[keep]
    top = n >= n_max / 10
    if meanN[top][-1] > meanN[top][0] and dist.mean > 1 and b == 1:
        raise SupercriticalError("meanN grows exponentially: supercritical, no power-law fit")
    if not np.all(np.isfinite(meanN[top])) or meanN[top][-1] > 1e12:
        raise SupercriticalError("meanN grows without bound: supercritical, no power-law fit")
    f = fit(n[top].astype(float), meanN[top], "powerlaw")
    return ScalingResult(n, meanN, float(b), f.coefficients["exponent"], f)


# --- supercritical growth constant ------------------------------------------

@dataclass(frozen=True)
class RhoResult:
    p1: float
    b: float
    log_rho: float
    loglog_rho: float
    lower: float
    upper: float
    n_used: int
    converged: bool
    psi: float
    s: np.ndarray = field(repr=False)
    Lu: np.ndarray = field(repr=False)
    Lv: np.ndarray = field(repr=False)

    @property
    def rho(self):
        return math.exp(self.log_rho)


def rho_bounds(p1, b):
    """``sqrt(p2 b (p1 + p2 b)) <= rho <= p1 + p2 b``."""
    p2 = 1.0 - p1
    return math.sqrt(p2 * b * (p1 + p2 * b)), p1 + p2 * b


def log_trajectory(p1, b, n_max):
    """``(n, Lu_n, Lv_n)`` for ``p = (0, p1, 1 - p1)`` from ``(1, 1)``; stops at overflow."""
    dist = OffspringDist([0.0, p1, 1.0 - p1])
    try:
        traj = run(dist, b, n_max, logspace=True)
    except RecursionOverflow as exc:
        traj = exc.trajectory
    return traj.steps, traj.data[:, 0], traj.data[:, 1]


def rho(p1, b, tol=1e-9, n_max=1_000_000) -> RhoResult:
    """Growth constant ``rho = lim v_n^(2^-n)`` via ``s_n = 2^-n (log(p2 b) + Lv_n)``.

    ``s_n`` increases to ``log rho``; iteration stops at the first ``n`` with
    ``s_n > 0`` and ``s_{n+1} - s_n < tol s_n``.  If that never happens before
    ``n_max`` (or before ``Lv`` overflows), the result is flagged unconverged.
    """
    if not 0 < p1 < 1:
        raise ParameterError("rho needs 0 < p1 < 1")
    if b <= 1:
        raise ParameterError("rho needs b > 1")
    p2 = 1.0 - p1
    n, Lu, Lv = log_trajectory(p1, b, n_max)
    with np.errstate(over="ignore"):
        s = np.ldexp(math.log(p2 * b) + Lv, -n.astype(np.int64))
    ok = np.isfinite(s)
    n, Lu, Lv, s = n[ok], Lu[ok], Lv[ok], s[ok]
    ds = np.diff(s)
    stop = np.flatnonzero((s[:-1] > 0) & (ds < tol * s[:-1]))
    converged = stop.size > 0
    last = int(stop[0]) + 1 if converged else s.size - 1
    s_used = s[:last + 1]
    lower, upper = rho_bounds(p1, b)
    log_rho = float(s_used[-1])
    return RhoResult(
        float(p1), float(b), log_rho, math.log(log_rho) if log_rho > 0 else math.nan,
        lower, upper, int(n[last]), converged, -log_rho, s_used, Lu[:last + 1], Lv[:last + 1])


def check_s_sequence(r: RhoResult):
    """Strict increase of ``s_n`` and the upper envelope, up to the stopping index.

    The final increment is below ``tol * s_n`` by construction and may sit at
    rounding level, so it only has to be nonnegative up to a few ulps.
    """
    p2 = 1.0 - r.p1
    q = r.p1 + p2 * r.b
    n = np.arange(r.s.size)
    envelope = math.log(q) + np.ldexp(math.log(p2 * r.b / q), -n)
    ds = np.diff(r.s)
    increasing = bool(np.all(ds[:-1] > 0)) if ds.size else True
    if ds.size:
        increasing = increasing and ds[-1] > -4 * np.finfo(float).eps * abs(r.s[-1])
    # equality holds at n = 0, so allow rounding in the two log terms
    slack = 8 * np.finfo(float).eps * (abs(math.log(q)) + abs(math.log(p2 * r.b / q)) + np.abs(r.s))
    below = bool(np.all(r.s <= envelope + slack))
    return increasing, below


def crossover_series(p1, b, n_max=1000):
    """``(n, log(Lu_n) / n)`` for ``n >= 1`` with ``Lu_n > 0``."""
    n, Lu, _ = log_trajectory(p1, b, n_max)
    keep = (n >= 1) & (Lu > 0)
    return n[keep], np.log(Lu[keep]) / n[keep]


def crossover_fit(p1, b, window):
    """``gamma - delta / n`` fit of :func:`crossover_series` over ``window``."""
    lo, hi = window
    n, y = crossover_series(p1, b, hi)
    sel = (n >= lo) & (n <= hi)
    return fit(n[sel].astype(float), y[sel], "gamma_delta")


def rho_sweep(p1, b_values, tol=1e-9):
    """:func:`rho` over a list of couplings."""
    return [rho(p1, float(b), tol) for b in b_values]


def sweep_fit(results):
    """Log-linear fit of ``loglog rho`` against ``log(b - 1)``."""
    b = np.array([r.b for r in results])
    y = np.array([r.loglog_rho for r in results])
    return fit(b, y, "log_linear")


__all__ = [
    "Approach", "BracketResult", "ConvergenceError", "CriticalPoint", "FixedPointResult",
    "FitResult", "RhoResult", "ScalingResult", "SupercriticalError", "approach_fixed_point",
    "beta_c", "check_s_sequence", "classify", "critical_fixed_point", "critical_scaling",
    "crossover_fit", "crossover_series", "empirical_criticality", "fit", "fixed_point",
    "in_triangle", "rho", "rho_bounds", "rho_sweep", "scan_surface", "sweep_fit",
]
