"""Modulus inequality checks and isolated-singularity classification.

``verify_vaisala`` compares the discrete modulus of the image of a ring
family with the dilatation-weighted energy of a radial density on the
source ring. ``classify_singularity`` runs the hypothesis tests of one of
three removability criteria on a sequence of shrinking radii and reports
REMOVABLE, POLE_OR_REMOVABLE or INCONCLUSIVE.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .conditions import (
    SLOPE_TOL, Divergence, Growth, Verdict, _check_eps, _loglog_slope, divergence_integrals,
    divergence_verdict, fmo_test, loglog_growth_test, spherical_mean_function, weighted_annulus_integral,
)
from .core import (
    Annulus, CellGrid, PreconditionError, as_point, build_sphere_quadrature, shell_integral,
    sphere_area_constant,
)
from .dilatation import dilatation_arrays
from .mapping import MappingField
from .modulus import discrete_modulus, ring_modulus, sample_ring_family

SIDE_CONDITION_TOL = 1e-9
DOMINATION_RTOL = 1e-6
UNDERFLOW = 1e-290


# -- radial densities --------------------------------------------------------

@dataclass(frozen=True)
class RadialDensity:
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    description: str = "custom"

    def __call__(self, r):
        return self.func(np.asarray(r, dtype=float))

    def line_integral(self, r1: float, r2: float) -> float:
        """int_{r1}^{r2} rho(r) dr, integrated in log r."""
        val, _ = integrate.quad(lambda s: float(self(np.exp(s))) * np.exp(s), np.log(r1), np.log(r2),
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return float(val)

    def scaled(self, c: float) -> "RadialDensity":
        f = self.func
        return RadialDensity(lambda r: c * f(r), f"{c:g} * ({self.description})")


def extremal_radial_density(r1: float, r2: float) -> RadialDensity:
    """1 / (r log(r2 / r1)): the extremal density of the ring r1 < |x| < r2."""
    if not 0 < r1 < r2:
        raise PreconditionError("need 0 < r1 < r2")
    L = np.log(r2 / r1)
    return RadialDensity(lambda r: 1.0 / (r * L), f"1/(r log({r2:g}/{r1:g}))")


def weighted_radial_density(q: Callable[[float], float], n: int, r1: float, r2: float) -> RadialDensity:
    """psi / I with psi(t) = 1 / (t q(t)^{1/(n-1)}), I = int psi.

    For a radial majorant q of D_f this minimises int q rho^n over
    admissible radial densities, giving omega_{n-1} / I^{n-1}.
    """
    e = 1.0 / (n - 1)
    I, _ = integrate.quad(lambda s: 1.0 / float(q(np.exp(s))) ** e, np.log(r1), np.log(r2),
                          epsabs=0.0, epsrel=1e-12, limit=200)

    def rho(r):
        r = np.asarray(r, dtype=float)
        return 1.0 / (r * np.vectorize(lambda t: float(q(t)))(r) ** e * I)
    return RadialDensity(rho, f"psi/I for a radial majorant, I={I:.6g}")


# -- Väisälä-type inequality -------------------------------------------------

@dataclass(frozen=True)
class InequalityReport:
    annulus: Annulus
    map_id: str
    rho_description: str
    rho_integral: float
    lhs: float
    rhs: float
    m: int
    tolerance: float
    lhs_lower_bound: float
    lhs_relative_gap: float
    lhs_converged: bool
    lhs_analytic: float | None
    rhs_abserr: float
    rhs_excluded_fraction: float
    grid_shape: tuple[int, ...]
    rays: int

    @property
    def margin(self) -> float:
        return self.rhs / self.m - self.lhs

    @property
    def rhs_reliable(self) -> bool:
        return self.rhs_excluded_fraction <= 0.01

    @property
    def holds(self) -> bool:
        """lhs <= rhs / m up to the relative tolerance."""
        return self.lhs <= (self.rhs / self.m) * (1 + self.tolerance)

    def to_dict(self) -> dict:
        a = self.annulus
        return {
            "annulus": {"center": a.center.tolist(), "r_inner": a.r_inner, "r_outer": a.r_outer},
            "map": self.map_id, "rho": self.rho_description, "rho_integral": self.rho_integral,
            "lhs": self.lhs, "rhs": self.rhs, "m": self.m, "margin": self.margin,
            "tolerance": self.tolerance, "holds": self.holds,
            "lhs_lower_bound": self.lhs_lower_bound, "lhs_relative_gap": self.lhs_relative_gap,
            "lhs_converged": self.lhs_converged, "lhs_analytic": self.lhs_analytic,
            "rhs_abserr": self.rhs_abserr, "rhs_excluded_fraction": self.rhs_excluded_fraction,
            "rhs_reliable": self.rhs_reliable, "grid_shape": list(self.grid_shape), "rays": self.rays,
        }


def angular_dilatation_field(f: MappingField, x0) -> Callable[[np.ndarray], np.ndarray]:
    """X -> D_f(X, x0), vectorised."""
    x0 = as_point(x0, f.n)

    def D(X):
        X = np.atleast_2d(X)
        diff = X - x0
        r = np.linalg.norm(diff, axis=1)
        return dilatation_arrays(f.jacobians(X), diff / r[:, None])["D_f"]
    return D


def _analytic_image_modulus(f: MappingField, annulus: Annulus, probes: int = 64) -> float | None:
    # if f sends both boundary spheres to spheres about a common centre, the image is a ring
    sph = build_sphere_quadrature(annulus.center, 1.0, probes).directions
    c = annulus.center
    inner = f(c + annulus.r_inner * sph)
    outer = f(c + annulus.r_outer * sph)
    centre = inner.mean(axis=0)
    R1 = np.linalg.norm(inner - centre, axis=1)
    R2 = np.linalg.norm(outer - centre, axis=1)
    if np.ptp(R1) > 1e-9 * R1.mean() or np.ptp(R2) > 1e-9 * R2.mean():
        return None
    if np.linalg.norm(outer.mean(axis=0) - centre) > 1e-9 * R2.mean():
        return None
    lo, hi = sorted((R1.mean(), R2.mean()))
    if not 0 < lo < hi:
        return None
    return ring_modulus(annulus.n, lo, hi)


def verify_vaisala(f: MappingField, annulus: Annulus, rho: RadialDensity | None = None,
                   grid: CellGrid | None = None, rays: int = 256, resolution: int = 512, m: int = 1,
                   tolerance: float = 0.03, vertices: int = 129, angular_nodes: int = 256,
                   budget: int = 5000) -> InequalityReport:
    """Estimate both sides of M(f(Gamma)) <= (1/m) int D_f(x, x0) rho^n(|x - x0|) dm(x).

    Gamma is the family of curves joining the boundary spheres of
    ``annulus``, x0 its centre. The default density is the extremal one,
    and the default grid covers the image family at ``resolution`` cells
    per axis.
    """
    if int(m) != m or m < 1:
        raise PreconditionError("multiplicity m must be a positive integer")
    if annulus.n != f.n:
        raise PreconditionError("annulus and map dimensions differ")
    r1, r2 = annulus.r_inner, annulus.r_outer
    rho = extremal_radial_density(r1, r2) if rho is None else rho
    side = rho.line_integral(r1, r2)
    if side < 1 - SIDE_CONDITION_TOL:
        raise PreconditionError(f"density is not admissible: int rho dr = {side:.12g} < 1")

    family = sample_ring_family(annulus, rays, vertices)
    f.check_domain(family.vertices())
    image = family.push_forward(f)
    if grid is None:
        grid = CellGrid.covering(image.vertices(), resolution)
    est = discrete_modulus(image, grid, budget=budget)

    n = annulus.n
    D = angular_dilatation_field(f, annulus.center)
    rhs = shell_integral(D, annulus.center, r1, r2, weight=lambda r: float(rho(r)) ** n,
                         angular_nodes=angular_nodes)
    return InequalityReport(
        annulus, f.name, rho.description, side, est.value, rhs.value, int(m), tolerance,
        est.lower_bound, est.relative_gap, est.converged, _analytic_image_modulus(f, annulus),
        rhs.abserr, rhs.excluded_fraction, grid.shape, rays,
    )


# -- constants ---------------------------------------------------------------

def beta_constant(n: int, A: float, M: float = 1.0) -> float:
    """(omega_{n-1} / (A M^{n-1}))^{1/(n-1)}."""
    if not (A > 0 and M > 0):
        raise PreconditionError("A and M must be positive")
    return (sphere_area_constant(n) / (A * M ** (n - 1))) ** (1.0 / (n - 1))


def distortion_bound(I_value, R: float, alpha: float = 1.0, delta: float = 1.0, beta: float = 1.0):
    """alpha (1 + R^2) / delta * exp(-beta I)."""
    if not (R > 0 and alpha > 0 and delta > 0 and beta > 0):
        raise PreconditionError("R, alpha, delta and beta must be positive")
    return alpha * (1 + R * R) / delta * np.exp(-beta * np.asarray(I_value, dtype=float))


# -- classification ----------------------------------------------------------

class Route(str, Enum):
    FMO_ROUTE = "FMO_ROUTE"
    DIVERGENCE_ROUTE = "DIVERGENCE_ROUTE"
    LEMMA_ROUTE = "LEMMA_ROUTE"


class Classification(str, Enum):
    REMOVABLE = "REMOVABLE"
    POLE_OR_REMOVABLE = "POLE_OR_REMOVABLE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class ClassifyParams:
    """Inputs of a classification run.

    ``C`` and ``p`` pin down the weak growth bound; when omitted the bound is
    judged from the trend of the growth data. ``A`` and ``M`` enter beta_n;
    FMO_ROUTE estimates ``A`` by the log-log test when it is not given.
    ``phi`` and ``psi`` are required by LEMMA_ROUTE.
    """

    eps0: float = 0.5
    epsilons: tuple[float, ...] | None = None
    C: float | None = None
    p: float | None = None
    A: float | None = None
    M: float | None = None
    alpha: float = 1.0
    delta: float = 1.0
    R: float | None = None
    phi: Callable[[float], float] | None = field(default=None, repr=False)
    psi: Callable[[float], float] | None = field(default=None, repr=False)
    domination_samples: int = 1000
    seed: int = 0
    angular_nodes: int = 64
    slope_tol: float = SLOPE_TOL
    tolerance: float = 0.05

    def eps(self) -> np.ndarray:
        if self.epsilons is None:
            return np.geomspace(self.eps0 / 10, self.eps0 * 1e-5, 9)
        return np.asarray(self.epsilons, dtype=float)


@dataclass(frozen=True)
class ClassificationReport:
    map_id: str
    b: np.ndarray
    route: Route
    q_description: str
    params: dict
    epsilons: np.ndarray
    growth: np.ndarray
    hypotheses: dict
    weak: dict
    strong: dict
    n: int
    A: float | None
    M: float
    beta_n: float | None
    verdict: Classification
    failed_hypothesis: str | None
    distortion: np.ndarray | None = None

    def beta_consistent(self, tol: float = 1e-12) -> bool:
        if self.beta_n is None or self.A is None:
            return True
        return abs(beta_constant(self.n, self.A, self.M) - self.beta_n) <= tol * max(1.0, abs(self.beta_n))

    def to_dict(self) -> dict:
        return {
            "map": self.map_id, "b": self.b.tolist(), "route": self.route.value, "Q": self.q_description,
            "params": self.params, "epsilons": self.epsilons.tolist(), "growth": self.growth.tolist(),
            "hypotheses": self.hypotheses, "weak": self.weak, "strong": self.strong,
            "n": self.n, "A": self.A, "M": self.M, "beta_n": self.beta_n,
            "verdict": self.verdict.value, "failed_hypothesis": self.failed_hypothesis,
            "distortion_bound": None if self.distortion is None else self.distortion.tolist(),
        }


def sphere_maxima(f: MappingField, b, eps: Sequence[float], nodes: int = 64) -> np.ndarray:
    """max |f| over a quadrature net on each sphere S(b, eps_k)."""
    b = as_point(b, f.n)
    dirs = build_sphere_quadrature(b, 1.0, nodes).directions
    return np.array([float(np.max(np.linalg.norm(f(b + e * dirs), axis=1))) for e in eps])


def growth_data(f, b, eps: np.ndarray, nodes: int = 64) -> np.ndarray:
    if hasattr(f, "growth_envelope"):
        return np.asarray(f.growth_envelope(b, eps), dtype=float)
    return sphere_maxima(f, b, eps, nodes)


def check_domination(f: MappingField, b, Q, r_min: float, r_max: float, samples: int = 1000,
                     seed: int = 0, rtol: float = DOMINATION_RTOL) -> dict:
    """Sample D_f(x, b) <= Q(x)(1 + rtol) on log-uniform radii in (r_min, r_max).

    Points where the Jacobian has underflowed carry no information and are
    replaced until ``samples`` informative points have been checked.
    """
    b = as_point(b, f.n)
    n = f.n
    rng = np.random.default_rng(seed)
    checked, worst, bad_point, skipped = 0, 0.0, None, 0
    for _ in range(20):
        need = samples - checked
        if need <= 0:
            break
        k = 2 * need
        u = rng.standard_normal((k, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = np.exp(rng.uniform(np.log(r_min), np.log(r_max), k))
        X = b + r[:, None] * u
        J = f.jacobians(X)
        live = np.abs(J).reshape(k, -1).max(axis=1) > UNDERFLOW
        skipped += int(np.sum(~live))
        X, J, u = X[live][:need], J[live][:need], u[live][:need]
        D = dilatation_arrays(J, u)["D_f"]
        q = np.asarray(Q(X), dtype=float)
        excess = D / np.maximum(q, 1e-300) - 1
        if excess.size:
            i = int(np.argmax(excess))
            if excess[i] > worst or bad_point is None:
                worst, bad_point = float(excess[i]), X[i].tolist()
        checked += len(X)
    ok = checked >= samples and worst <= rtol
    return {"ok": bool(ok), "checked": int(checked), "skipped_underflow": skipped,
            "max_relative_excess": worst, "worst_point": bad_point, "rtol": rtol}


def _tail(eps: np.ndarray) -> np.ndarray:
    t = eps <= eps[-1] * 1e3
    return t if t.sum() >= 2 else np.ones_like(eps, bool)


def bounded_trend(eps: np.ndarray, ratio: np.ndarray, tolerance: float) -> tuple[bool, float]:
    """Running supremum of ``ratio`` is stable over the two smallest decades."""
    r = np.where(np.isnan(ratio), np.inf, ratio)
    hist = np.maximum.accumulate(r)
    ref = eps >= eps[-1] * 100.0 * (1 - 1e-12)
    before = float(hist[ref][-1]) if ref.any() else float(hist[0])
    final = float(hist[-1])
    if final == np.inf:
        return False, final
    return bool(final <= before + tolerance * max(abs(before), 1e-300) or final <= 0), final


def zero_trend(eps: np.ndarray, log_N: np.ndarray, slope_tol: float, floor: float = np.log(1e-6)) -> tuple[bool, float]:
    """``N = exp(log_N)`` decreases to zero over the tail of the eps list.

    Requires N nonincreasing on the tail and either a power-law decay rate
    above ``slope_tol`` in 1/eps or a drop by the factor exp(floor).
    """
    t = _tail(eps)
    L = log_N[t]
    if np.all(np.isneginf(L[-1:])):
        finite = L[np.isfinite(L)]
        return bool(np.all(np.diff(L[np.isfinite(L)]) <= 1e-9 * np.abs(finite).max()) if finite.size > 1 else True), -np.inf
    if not np.all(np.isfinite(L)):
        return False, np.nan
    mono = bool(np.all(np.diff(L) <= 1e-9 * max(1.0, np.abs(L).max())))
    rate = float(np.polyfit(np.log(1.0 / eps[t]), L, 1)[0])
    drop = L[-1] - L[0]
    return mono and (rate <= -slope_tol or drop <= floor), rate


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def _weak_from_bound(logG: np.ndarray, log_env: np.ndarray, C: float) -> dict:
    lhs_excess = logG - (np.log(C) + log_env)
    return {"mode": "explicit", "holds": bool(np.all(lhs_excess <= 1e-12 * np.maximum(1.0, np.abs(log_env)))),
            "max_log_excess": float(np.max(lhs_excess))}


def _local_exponents(logG: np.ndarray, x: np.ndarray) -> np.ndarray:
    # increments of log|f| per unit of the envelope's log scale, referenced to the first radius
    dx = x - x[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(dx > 0, (logG - logG[0]) / dx, -np.inf)


def classify_singularity(f, b, Q, route: Route | str = Route.FMO_ROUTE,
                         params: ClassifyParams | None = None, q_description: str = "Q") -> ClassificationReport:
    """Run one removability criterion at the isolated point b.

    ``f`` is a MappingField or any object with ``growth_envelope(b, eps)``
    (a sampled map); for the latter the domination check D_f <= Q is
    skipped and flagged. The verdict is REMOVABLE only when the strong
    condition's normalised quantity decays to zero on the tail of the
    radii; INCONCLUSIVE carries the name of the failed hypothesis.
    """
    P = ClassifyParams() if params is None else params
    route = Route(route)
    b = as_point(b)
    n = b.size
    eps = _check_eps(P.eps(), P.eps0, min_decades=3.0)
    map_id = getattr(f, "name", type(f).__name__)

    hyp: dict = {}
    if isinstance(f, MappingField):
        hyp["domination"] = check_domination(f, b, Q, eps[-1], P.eps0, P.domination_samples, P.seed)
    else:
        hyp["domination"] = {"ok": True, "skipped": "sampled map: no Jacobian"}

    G = growth_data(f, b, eps, P.angular_nodes)
    logG = _log(G)
    A, M, beta, I = P.A, (1.0 if P.M is None else P.M), None, None
    failed = None if hyp["domination"]["ok"] else "domination"
    weak: dict = {}
    strong: dict = {}

    if route is Route.FMO_ROUTE:
        Q1 = lambda X: np.maximum(np.asarray(Q(X), dtype=float), 1.0)  # noqa: E731
        fmo = fmo_test(Q1, b, eps)
        hyp["fmo"] = fmo.to_dict()
        if fmo.verdict is not Verdict.IN_FMO and failed is None:
            failed = "fmo"
        if A is None:
            ll = loglog_growth_test(Q1, b, eps, P.eps0, angular_nodes=P.angular_nodes)
            hyp["loglog"] = ll.to_dict()
            A = ll.A_fit if ll.verdict is Growth.PASSES else None
        M = 1.0
        beta = beta_constant(n, A, 1.0) if A is not None else None
        x = np.log(np.log(1.0 / eps))
        if P.C is not None and P.p is not None:
            weak = _weak_from_bound(logG, P.p * x, P.C)
        else:
            t = _tail(eps)
            finite = np.isfinite(logG)
            slope = _loglog_slope(1.0 / eps[t & finite], G[t & finite]) if np.sum(t & finite) >= 2 else -np.inf
            weak = {"mode": "trend", "power_slope": slope, "holds": bool(slope <= P.slope_tol),
                    "p_fit": float(np.max(_local_exponents(logG, x)))}
        if beta is not None:
            logN = logG - beta * x
            ok, rate = zero_trend(eps, logN, P.slope_tol)
            strong = {"quantity": "|f| / log(1/eps)^beta_n", "log_values": logN.tolist(), "rate": rate, "zero_trend": ok}
        else:
            strong = {"quantity": "|f| / log(1/eps)^beta_n", "zero_trend": False, "reason": "A unavailable"}
            if failed is None and "loglog" in hyp:
                failed = "loglog_constant"

    elif route is Route.DIVERGENCE_ROUTE:
        q = spherical_mean_function(Q, b)
        div = divergence_integrals(q, n, eps, P.eps0, P.slope_tol)
        hyp["divergence"] = div.to_dict()
        if failed is None and not (div.finite and div.diverges):
            failed = "divergence"
        I = div.integrals
        if A is None:
            A = sphere_area_constant(n)
        beta = beta_constant(n, A, M)
        if P.C is not None and P.p is not None:
            weak = _weak_from_bound(logG, P.p * I, P.C)
        else:
            ok, p_fit = bounded_trend(eps, _local_exponents(logG, I), P.tolerance)
            weak = {"mode": "trend", "holds": ok, "p_fit": p_fit}
        logN = logG - beta * I
        ok, rate = zero_trend(eps, logN, P.slope_tol)
        strong = {"quantity": "|f| exp(-beta_n I)", "log_values": logN.tolist(), "rate": rate, "zero_trend": ok}

    else:
        if P.phi is None or P.psi is None:
            raise PreconditionError("LEMMA_ROUTE needs phi and psi")
        phi, psi = P.phi, P.psi
        I = np.cumsum([integrate.quad(lambda t: float(psi(t)), lo, hi, limit=200)[0]
                       for lo, hi in zip(eps, np.concatenate([[P.eps0], eps[:-1]]))])
        log_phi = np.log(np.array([float(phi(e)) for e in eps]))
        W = np.array([weighted_annulus_integral(Q, b, e, P.eps0, psi, P.angular_nodes) for e in eps])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = W * log_phi ** (n - 1) / I ** n
            m_ratio = I / log_phi
        a_ok, A_fit = bounded_trend(eps, ratio, P.tolerance)
        verdict_I, _ = divergence_verdict(eps, I, P.slope_tol)
        m_ok, M_fit = bounded_trend(eps, m_ratio, P.tolerance)
        hyp["energy_bound"] = {"holds": a_ok if P.A is None else bool(np.all(ratio <= P.A * (1 + P.tolerance))),
                               "A_fit": A_fit, "ratios": ratio.tolist()}
        hyp["I_divergence"] = {"integrals": I.tolist(), "verdict": verdict_I.value}
        if P.M is not None:
            m_ok = bool(np.all(m_ratio <= P.M * (1 + P.tolerance)))
        hyp["log_phi_bound"] = {"holds": m_ok, "M_fit": M_fit}
        if failed is None and not hyp["energy_bound"]["holds"]:
            failed = "energy_bound"
        if failed is None and verdict_I is not Divergence.DIVERGES:
            failed = "I_divergence"
        A = P.A if P.A is not None else A_fit
        M = P.M if P.M is not None else M_fit
        beta = beta_constant(n, A, M)
        if P.C is not None and P.p is not None:
            weak = _weak_from_bound(logG, P.p * log_phi, P.C)
        else:
            ok, p_fit = bounded_trend(eps, _local_exponents(logG, log_phi), P.tolerance)
            weak = {"mode": "trend", "holds": ok, "p_fit": p_fit}
        logN = logG - beta * I
        ok, rate = zero_trend(eps, logN, P.slope_tol)
        strong = {"quantity": "|f| exp(-beta_n I)", "log_values": logN.tolist(), "rate": rate,
                  "zero_trend": bool(ok and m_ok)}

    if failed is None and not weak.get("holds", False) and not strong.get("zero_trend", False):
        failed = "weak_growth"

    if failed is not None:
        verdict = Classification.INCONCLUSIVE
    elif strong.get("zero_trend", False):
        verdict = Classification.REMOVABLE
    elif weak.get("holds", False):
        verdict = Classification.POLE_OR_REMOVABLE
    else:
        verdict = Classification.INCONCLUSIVE

    distortion = None
    if I is not None and beta is not None:
        R = P.R if P.R is not None else float(np.nanmax(np.where(np.isfinite(G), G, np.nan))) or 1.0
        if R > 0:
            distortion = distortion_bound(I, R, P.alpha, P.delta, beta)

    rec = {"eps0": P.eps0, "C": P.C, "p": P.p, "alpha": P.alpha, "delta": P.delta, "R": P.R,
           "slope_tol": P.slope_tol, "tolerance": P.tolerance, "seed": P.seed}
    return ClassificationReport(map_id, b, route, q_description, rec, eps, G, hyp, weak, strong, n,
                                None if A is None else float(A), float(M), beta, verdict, failed, distortion)
