"""Integral hypotheses on a majorant Q of the angular dilatation.

Everything that involves a limit as eps -> 0 is judged from a finite list
of radii spanning several decades. Verdicts are trend based and
INCONCLUSIVE is a legitimate answer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .core import (
    DomainError, PreconditionError, as_point, ball_volume_constant, build_sphere_quadrature,
    shell_integral,
)

SLOPE_TOL = 0.05
MIN_DECADES = 3.0
MIN_POINTS = 5

ScalarField = Callable[[np.ndarray], np.ndarray]


def _check_eps(eps, eps0: float | None = None, min_points: int = MIN_POINTS,
               min_decades: float = MIN_DECADES) -> np.ndarray:
    e = np.asarray(eps, dtype=float)
    if e.ndim != 1 or len(e) < min_points:
        raise PreconditionError(f"need at least {min_points} radii")
    if np.any(e <= 0) or np.any(np.diff(e) >= 0):
        raise PreconditionError("radii must be positive and strictly decreasing")
    if np.log10(e[0] / e[-1]) < min_decades - 1e-9:
        raise PreconditionError(f"radii must span at least {min_decades} decades")
    if eps0 is not None and not e[0] < eps0:
        raise PreconditionError("every radius must lie below eps0")
    return e


def _loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- radial profiles ---------------------------------------------------------

@dataclass(frozen=True)
class RadialProfile:
    """Sampled nonnegative function of the radius, interpolated piecewise as a power law."""

    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise PreconditionError("profile needs matching 1-d radii and values (length >= 2)")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise PreconditionError("profile radii must be positive and strictly increasing")
        if np.any(v < 0) or np.any(np.isnan(v)):
            raise PreconditionError("profile values must be nonnegative")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    @property
    def flagged(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    @classmethod
    def from_function(cls, q: Callable, radii) -> "RadialProfile":
        r = np.sort(np.asarray(radii, dtype=float))
        return cls(r, np.array([float(q(t)) for t in r]))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        lr, lv = np.log(self.radii), self._logv()
        out = np.exp(np.interp(np.log(r), lr, lv, left=np.nan, right=np.nan))
        # power-law extrapolation from the end pieces
        lo, hi = r < self.radii[0], r > self.radii[-1]
        s0 = (lv[1] - lv[0]) / (lr[1] - lr[0])
        s1 = (lv[-1] - lv[-2]) / (lr[-1] - lr[-2])
        out = np.where(lo, np.exp(lv[0] + s0 * (np.log(np.where(lo, r, 1.0)) - lr[0])), out)
        out = np.where(hi, np.exp(lv[-1] + s1 * (np.log(np.where(hi, r, 1.0)) - lr[-1])), out)
        return out

    def _logv(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.values)

    def weighted_log_integral(self, n: int, a: float, b: float) -> float:
        """int_a^b dt / (t q(t)^{1/(n-1)}) integrated exactly on each power-law piece."""
        lr, lv = np.log(self.radii), self._logv()
        if np.any(~np.isfinite(lv)):
            # a zero or infinite sample makes the integrand unbounded/zero on that piece
            return float(_quad_log(lambda t: self(t), n, a, b)[0])
        knots = np.concatenate([[np.log(a)], lr[(lr > np.log(a)) & (lr < np.log(b))], [np.log(b)]])
        total = 0.0
        for u0, u1 in zip(knots[:-1], knots[1:]):
            um = 0.5 * (u0 + u1)
            j = int(np.clip(np.searchsorted(lr, um) - 1, 0, len(lr) - 2))
            slope = (lv[j + 1] - lv[j]) / (lr[j + 1] - lr[j])
            # log q = lv[j] + slope (u - lr[j]); integrand in u is exp(-(log q)/(n-1))
            c = -slope / (n - 1)
            base = np.exp(-(lv[j] - slope * lr[j]) / (n - 1))
            if abs(c) < 1e-14:
                total += base * (u1 - u0)
            else:
                total += base * (np.exp(c * u1) - np.exp(c * u0)) / c
        return float(total)


def _quad_log(q: Callable, n: int, a: float, b: float) -> tuple[float, bool]:
    def integrand(u):
        qv = float(np.asarray(q(np.exp(u))).reshape(-1)[0])
        if qv <= 0:
            return np.inf
        return qv ** (-1.0 / (n - 1))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(integrand, np.log(a), np.log(b), epsabs=0.0, epsrel=1e-12, limit=400)
            return float(val), bool(np.isfinite(val))
        except integrate.IntegrationWarning:
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(integrand, np.log(a), np.log(b), limit=400)
            return float(val), False


def weighted_log_integral(q, n: int, a: float, b: float) -> tuple[float, bool]:
    """I(a, b) = int_a^b dt / (t q^{1/(n-1)}(t)) and a reliability flag."""
    if not 0 < a <= b:
        raise PreconditionError("need 0 < a <= b")
    if a == b:
        return 0.0, True
    if isinstance(q, RadialProfile):
        v = q.weighted_log_integral(n, a, b)
        return v, bool(np.isfinite(v))
    return _quad_log(q, n, a, b)


# -- spherical means ---------------------------------------------------------

class SphericalMean(NamedTuple):
    value: float
    excluded_fraction: float
    reliable: bool


def spherical_mean(Q: ScalarField, x0, r: float, quad=None, nodes: int = 256) -> SphericalMean:
    """Average of Q over S(x0, r) with respect to surface measure."""
    x0 = as_point(x0)
    if quad is None:
        quad = build_sphere_quadrature(x0, r, nodes)
    elif not (np.allclose(quad.center, x0) and np.isclose(quad.radius, r)):
        raise PreconditionError("quadrature must be centred at x0 with radius r")
    vals = np.asarray(Q(quad.nodes), dtype=float)
    bad = ~np.isfinite(vals)
    w = quad.weights
    frac = float(w[bad].sum() / w.sum())
    value = float(np.dot(w[~bad], vals[~bad]) / quad.area)
    return SphericalMean(value, frac, frac <= 0.01)


def radial_profile(Q: ScalarField, x0, radii, nodes: int = 256) -> RadialProfile:
    """Sampled spherical means q_{x0}(r)."""
    x0 = as_point(x0)
    r = np.sort(np.asarray(radii, dtype=float))
    rule = build_sphere_quadrature(x0, 1.0, nodes)
    vals = [spherical_mean(Q, x0, t, rule.rescaled(x0, t)).value for t in r]
    return RadialProfile(r, np.array(vals))


def spherical_mean_function(Q: ScalarField, x0, nodes: int = 256) -> Callable[[float], float]:
    """r -> q_{x0}(r) evaluated on demand (for adaptive integrators)."""
    x0 = as_point(x0)
    rule = build_sphere_quadrature(x0, 1.0, nodes)

    def q(r):
        return spherical_mean(Q, x0, float(r), rule.rescaled(x0, float(r))).value
    return q


# -- FMO ---------------------------------------------------------------------

class Verdict(str, Enum):
    IN_FMO = "IN_FMO"
    NOT_FMO = "NOT_FMO"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class FMOVerdict:
    x0: np.ndarray
    epsilons: np.ndarray
    ball_means: np.ndarray
    oscillations: np.ndarray
    fitted_slope: float
    limsup_estimate: float
    verdict: Verdict
    slope_tol: float = SLOPE_TOL

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(), "epsilons": self.epsilons.tolist(),
            "ball_means": self.ball_means.tolist(), "oscillations": self.oscillations.tolist(),
            "fitted_slope": self.fitted_slope, "limsup_estimate": self.limsup_estimate,
            "verdict": self.verdict.value, "slope_tol": self.slope_tol,
        }


def _ball_rule(x0: np.ndarray, eps: float, radial: int, angular: int):
    # r = eps s^2 clusters nodes at the centre, where the tested Q may blow up
    n = x0.size
    s, ws = np.polynomial.legendre.leggauss(radial)
    s, ws = 0.5 * (s + 1), 0.5 * ws
    r = eps * s * s
    dr = 2 * eps * s * ws
    sph = build_sphere_quadrature(np.zeros(n), 1.0, angular)
    pts = x0 + (r[:, None, None] * sph.directions[None, :, :]).reshape(-1, n)
    w = ((dr * r ** (n - 1))[:, None] * sph.weights[None, :]).ravel()
    return pts, w


def fmo_test(Q: ScalarField, x0, epsilons, domain: Callable | None = None,
             radial_nodes: int = 64, angular_nodes: int = 128, slope_tol: float = SLOPE_TOL) -> FMOVerdict:
    """Finite-mean-oscillation test of Q at x0 over shrinking balls."""
    x0 = as_point(x0)
    eps = _check_eps(epsilons)
    n = x0.size
    means, oscs = [], []
    for e in eps:
        pts, w = _ball_rule(x0, e, radial_nodes, angular_nodes)
        if domain is not None and not np.all(domain(pts)):
            raise DomainError(f"ball B(x0, {e}) leaves the domain")
        vol = ball_volume_constant(n) * e ** n
        v = np.asarray(Q(pts), dtype=float)
        mean = float(np.dot(w, v) / vol)
        means.append(mean)
        oscs.append(float(np.dot(w, np.abs(v - mean)) / vol))
    means, oscs = np.array(means), np.array(oscs)

    scale = 1.0 + float(np.max(np.abs(means)))
    if np.all(oscs <= 1e-13 * scale):
        return FMOVerdict(x0, eps, means, oscs, 0.0, float(oscs.max()), Verdict.IN_FMO, slope_tol)

    tail = eps <= eps[0] * 1e-1 if np.sum(eps <= eps[0] * 1e-1) >= 3 else np.ones_like(eps, bool)
    positive = oscs > 0
    slope = _loglog_slope(1.0 / eps[positive & tail], oscs[positive & tail]) if np.sum(positive & tail) >= 2 else 0.0
    if slope <= slope_tol:
        verdict = Verdict.IN_FMO
    elif oscs[-1] >= oscs.max() * (1 - 1e-12) and oscs[-1] > oscs[0]:
        verdict = Verdict.NOT_FMO
    else:
        verdict = Verdict.INCONCLUSIVE
    return FMOVerdict(x0, eps, means, oscs, slope, float(oscs.max()), verdict, slope_tol)


# -- divergence of int dt / (t q^{1/(n-1)}) ----------------------------------

class Divergence(str, Enum):
    DIVERGES = "DIVERGES"
    CONVERGES = "CONVERGES"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class DivergenceReport:
    n: int
    eps0: float
    epsilons: np.ndarray
    integrals: np.ndarray
    reliable: np.ndarray
    tail_decay_rate: float
    verdict: Divergence
    slope_tol: float = SLOPE_TOL

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.integrals)))

    @property
    def diverges(self) -> bool:
        return self.verdict is Divergence.DIVERGES

    def to_dict(self) -> dict:
        return {
            "n": self.n, "eps0": self.eps0, "epsilons": self.epsilons.tolist(),
            "integrals": self.integrals.tolist(), "reliable": self.reliable.tolist(),
            "finite": self.finite, "tail_decay_rate": self.tail_decay_rate,
            "verdict": self.verdict.value, "slope_tol": self.slope_tol,
        }


def divergence_verdict(eps: np.ndarray, I: np.ndarray, slope_tol: float = SLOPE_TOL) -> tuple[Divergence, float]:
    """Judge whether I(eps) -> infinity from values on decreasing eps.

    The mean integrand per unit log(1/eps) between consecutive radii is fitted
    to a power of eps over the smallest three decades. A decay exponent at
    or below ``slope_tol`` means the increments do not shrink geometrically.
    """
    if not np.all(np.isfinite(I)):
        return Divergence.INCONCLUSIVE, np.nan
    du = np.diff(np.log(1.0 / eps))
    g = np.diff(I) / du
    mids = np.sqrt(eps[:-1] * eps[1:])
    if np.any(g < -1e-12 * np.abs(I[1:]).max()):
        return Divergence.INCONCLUSIVE, np.nan
    tail = mids <= eps[-1] * 1e3
    if tail.sum() < 2:
        tail = np.ones_like(mids, bool)
    if np.any(g[tail] <= 0):
        return Divergence.CONVERGES, np.inf
    rate = _loglog_slope(mids[tail], g[tail])
    if rate <= slope_tol:
        return Divergence.DIVERGES, rate
    return Divergence.CONVERGES, rate


def divergence_integrals(q, n: int, eps_list, eps0: float, slope_tol: float = SLOPE_TOL) -> DivergenceReport:
    """I(eps, eps0) = int_eps^eps0 dt / (t q^{1/(n-1)}(t)) on each eps, with a divergence verdict."""
    eps = _check_eps(eps_list, eps0)
    vals, ok = [], []
    prev, acc = eps0, 0.0
    for e in eps:
        v, good = weighted_log_integral(q, n, e, prev)
        acc += v
        vals.append(acc)
        ok.append(good)
        prev = e
    vals, ok = np.array(vals), np.array(ok)
    verdict, rate = divergence_verdict(eps, vals, slope_tol)
    return DivergenceReport(n, float(eps0), eps, vals, ok, rate, verdict, slope_tol)


# -- log-log growth of the weighted annulus integral -------------------------

class Growth(str, Enum):
    PASSES = "PASSES"
    FAILS = "FAILS"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class LogLogReport:
    b: np.ndarray
    eps0: float
    epsilons: np.ndarray
    integrals: np.ndarray
    ratios: np.ndarray
    A_fit: float
    A_fit_history: np.ndarray
    growth_exponent: float
    excluded_fraction: float
    verdict: Growth
    tolerance: float = 0.05

    @property
    def reliable(self) -> bool:
        return self.excluded_fraction <= 0.01

    def to_dict(self) -> dict:
        return {
            "b": self.b.tolist(), "eps0": self.eps0, "epsilons": self.epsilons.tolist(),
            "integrals": self.integrals.tolist(), "ratios": self.ratios.tolist(),
            "A_fit": self.A_fit, "A_fit_history": self.A_fit_history.tolist(),
            "growth_exponent": self.growth_exponent, "excluded_fraction": self.excluded_fraction,
            "reliable": self.reliable, "verdict": self.verdict.value, "tolerance": self.tolerance,
        }


def loglog_weight(n: int) -> Callable[[float], float]:
    """r -> 1 / (r^n log^n(1/r))."""
    return lambda r: 1.0 / (r ** n * np.log(1.0 / r) ** n)


def annulus_integrals(Q: ScalarField, b, eps, eps0: float, weight: Callable,
                      angular_nodes: int = 256) -> tuple[np.ndarray, float]:
    """Cumulative shell integrals of Q * weight over eps_k < |x - b| < eps0."""
    vals, prev, acc, excl = [], eps0, 0.0, 0.0
    for e in eps:
        s = shell_integral(Q, b, e, prev, weight, angular_nodes)
        acc += s.value
        excl = max(excl, s.excluded_fraction)
        vals.append(acc)
        prev = e
    return np.array(vals), excl


def loglog_growth_test(Q: ScalarField, b, eps_list, eps0: float, angular_nodes: int = 256,
                       tolerance: float = 0.05, slope_tol: float = SLOPE_TOL) -> LogLogReport:
    """Test int_{eps<|x-b|<eps0} Q / (|x-b|^n log^n(1/|x-b|)) <= A log(log(1/eps) / log(1/eps0)).

    ``A_fit`` is the running supremum of the ratio; the test passes when it
    moves by less than ``tolerance`` over the two smallest decades, and
    fails when the ratio keeps growing at a positive power of 1/eps.
    """
    b = as_point(b)
    n = b.size
    if not 0 < eps0 < 1:
        raise PreconditionError("eps0 must lie in (0, 1)")
    eps = _check_eps(eps_list, eps0)
    W, excl = annulus_integrals(Q, b, eps, eps0, loglog_weight(n), angular_nodes)
    denom = np.log(np.log(1.0 / eps) / np.log(1.0 / eps0))
    ratios = W / denom
    history = np.maximum.accumulate(ratios)
    A_fit = float(history[-1])

    tail = eps <= eps[-1] * 1e3
    if tail.sum() < 2:
        tail = np.ones_like(eps, bool)
    pos = W > 0
    growth = _loglog_slope(1.0 / eps[tail & pos], W[tail & pos]) if np.sum(tail & pos) >= 2 else 0.0
    ratio_slope = _loglog_slope(1.0 / eps[tail & pos], ratios[tail & pos]) if np.sum(tail & pos) >= 2 else 0.0

    ref = eps[-1] * 100.0
    before = history[eps >= ref * (1 - 1e-12)]
    A_before = float(before[-1]) if before.size else float(history[0])
    if A_fit <= A_before * (1 + tolerance):
        verdict = Growth.PASSES
    elif ratio_slope > slope_tol:
        verdict = Growth.FAILS
    else:
        verdict = Growth.INCONCLUSIVE
    return LogLogReport(b, float(eps0), eps, W, ratios, A_fit, history, growth, excl, verdict, tolerance)


def weighted_annulus_integral(Q: ScalarField, b, eps: float, eps0: float, psi: Callable,
                              angular_nodes: int = 256) -> float:
    """int_{eps<|x-b|<eps0} Q(x) psi(|x-b|)^n dm(x)."""
    b = as_point(b)
    n = b.size
    return shell_integral(Q, b, eps, eps0, lambda r: psi(r) ** n, angular_nodes).value
