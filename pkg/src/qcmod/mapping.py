"""Differentiable mappings, their Jacobians, and a small catalog of examples."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate

from .core import DomainError, PreconditionError, QCError, as_point, check_dimension

FD_STEP = 1e-6


class DivergenceError(QCError, ValueError):
    """The defining radial integral of a Beltrami map is not finite."""

    def __init__(self, message: str, radius: float):
        super().__init__(message)
        self.radius = radius


class CatalogError(QCError, KeyError):
    pass


class JacobianStrategy(str, Enum):
    CLOSED_FORM = "closed_form"
    CENTRAL_DIFFERENCE = "central_difference"


@dataclass(frozen=True)
class JacobianMatrix:
    matrix: np.ndarray
    singular_values: np.ndarray
    det: float
    degenerate: bool = False

    @classmethod
    def from_matrix(cls, A) -> "JacobianMatrix":
        A = np.array(A, dtype=float)
        try:
            s = np.linalg.svd(A, compute_uv=False)
            degenerate = bool(s[-1] <= 1e-14 * max(s[0], 1e-300))
        except np.linalg.LinAlgError:
            s = np.full(A.shape[0], np.nan)
            degenerate = True
        return cls(A, s, float(np.linalg.det(A)), degenerate)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix)

    @property
    def l_min(self) -> float:
        """Minimal stretch min_{|h|=1} |A h|."""
        return float(self.singular_values[-1])


@dataclass(frozen=True)
class MappingField:
    """A map D -> R^n evaluated on batches of shape ``(N, n)``.

    ``jac`` returns closed-form Jacobians of shape ``(N, n, n)``; when it is
    absent, or the strategy says so, central differences are used instead.
    """

    n: int
    func: Callable[[np.ndarray], np.ndarray]
    domain: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    strategy: JacobianStrategy = JacobianStrategy.CLOSED_FORM
    step: float = FD_STEP
    name: str = "map"
    params: dict = field(default_factory=dict)
    beltrami: "BeltramiSpec | None" = None

    def __post_init__(self):
        check_dimension(self.n)
        if self.jac is None and self.strategy is JacobianStrategy.CLOSED_FORM:
            object.__setattr__(self, "strategy", JacobianStrategy.CENTRAL_DIFFERENCE)

    def _batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        X = X.reshape(1, -1) if X.ndim == 1 else X
        if X.shape[1] != self.n:
            raise DomainError(f"{self.name}: expected points in R^{self.n}")
        return X

    def check_domain(self, X) -> np.ndarray:
        X = self._batch(X)
        ok = np.asarray(self.domain(X), dtype=bool) & np.all(np.isfinite(X), axis=1)
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise DomainError(f"{self.name}: point {X[bad].tolist()} (index {bad}) is outside the domain")
        return X

    def __call__(self, X) -> np.ndarray:
        X = self.check_domain(X)
        return np.asarray(self.func(X), dtype=float)

    def with_strategy(self, strategy: JacobianStrategy, step: float = FD_STEP) -> "MappingField":
        return MappingField(self.n, self.func, self.domain, self.jac, JacobianStrategy(strategy),
                            step, self.name, dict(self.params), self.beltrami)

    def jacobians(self, X) -> np.ndarray:
        X = self.check_domain(X)
        if self.strategy is JacobianStrategy.CLOSED_FORM:
            return np.asarray(self.jac(X), dtype=float)
        return central_difference_jacobians(self, X, self.step)

    def scaled(self, c: float) -> "MappingField":
        """The map ``c * f``."""
        jac = None if self.jac is None else (lambda X: c * self.jac(X))
        return MappingField(self.n, lambda X: c * self.func(X), self.domain, jac,
                            self.strategy, self.step, f"{c}*{self.name}", dict(self.params),
                            self.beltrami)


def central_difference_jacobians(f: MappingField, X, step: float = FD_STEP) -> np.ndarray:
    X = f._batch(X)
    N, n = X.shape
    h = step * (1.0 + np.linalg.norm(X, axis=1))
    J = np.empty((N, n, n))
    for i in range(n):
        E = np.zeros_like(X)
        E[:, i] = h
        fp = f(X + E)
        fm = f(X - E)
        J[:, :, i] = (fp - fm) / (2 * h[:, None])
    return J


def jacobian(f: MappingField, x) -> JacobianMatrix:
    x = as_point(x, f.n)
    return JacobianMatrix.from_matrix(f.jacobians(x[None, :])[0])


def directional_derivative(f: MappingField, x, h) -> np.ndarray:
    """f'(x) h for a unit direction h."""
    h = as_point(h, f.n)
    if abs(np.linalg.norm(h) - 1.0) > 1e-12:
        raise PreconditionError("direction must be a unit vector")
    return jacobian(f, x).matrix @ h


def difference_quotient(f: MappingField, x, h, t: float = 1e-7) -> np.ndarray:
    """One-sided quotient (f(x + t h) - f(x)) / t."""
    x = as_point(x, f.n)
    h = as_point(h, f.n)
    return (f(x + t * h)[0] - f(x)[0]) / t


def complex_derivatives(A) -> tuple[complex, complex]:
    """(f_z, f_zbar) of a planar map with real Jacobian A = [[a, b], [c, d]]."""
    A = np.asarray(A, dtype=float)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    fz = 0.5 * ((a + d) + 1j * (c - b))
    fzbar = 0.5 * ((a - d) + 1j * (c + b))
    return fz, fzbar


def beltrami_coefficient(A) -> np.ndarray:
    """mu = f_zbar / f_z, taken as 0 where f_z vanishes."""
    fz, fzbar = complex_derivatives(A)
    fz = np.asarray(fz)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(fz != 0, np.asarray(fzbar) / np.where(fz != 0, fz, 1), 0)
    return mu


# -- radial maps -------------------------------------------------------------

def radial_stretch_map(n: int, rho: Callable, drho: Callable, domain: Callable,
                       name: str, params: dict | None = None) -> MappingField:
    """x -> rho(|x|) x / |x| with its closed-form Jacobian.

    With g = rho(r)/r the Jacobian is g I + (g'(r)/r) x x^T.
    """
    def func(X):
        r = np.linalg.norm(X, axis=1)
        return X * (rho(r) / r)[:, None]

    def jac(X):
        r = np.linalg.norm(X, axis=1)
        p, dp = rho(r), drho(r)
        g = p / r
        dg = (dp * r - p) / r ** 2
        eye = np.broadcast_to(np.eye(n), (X.shape[0], n, n))
        return g[:, None, None] * eye + (dg / r)[:, None, None] * X[:, :, None] * X[:, None, :]

    return MappingField(n, func, domain, jac, name=name, params=params or {})


def punctured_ball(radius: float = 1.0, center=None) -> Callable:
    def domain(X):
        c = 0.0 if center is None else np.asarray(center)
        r = np.linalg.norm(X - c, axis=1)
        return (r > 0) & (r < radius)
    return domain


@dataclass(frozen=True)
class BeltramiSpec:
    """Radial Beltrami coefficient mu(z) = k(|z|) z / zbar."""

    k: Callable[[float], float]
    name: str = "k"

    def mu(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        kr = np.vectorize(self.k, otypes=[float])(r)
        return kr * z / np.conj(z)


def _find_singular_radius(k: Callable, a: float, b: float, samples: int = 513) -> float | None:
    ts = np.linspace(a, b, samples)
    kv = np.abs(np.vectorize(k, otypes=[float])(ts))
    hit = np.flatnonzero(kv >= 1.0)
    if hit.size == 0:
        return None
    j = int(hit[0])
    if j == 0:
        return float(ts[0])
    lo, hi = ts[j - 1], ts[j]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if abs(k(mid)) >= 1.0:
            hi = mid
        else:
            lo = mid
    return float(hi)


def beltrami_map(spec: BeltramiSpec, base_radius: float = 1.0, r_max: float = np.inf,
                 name: str | None = None) -> MappingField:
    """Planar radial map whose Beltrami coefficient is ``spec.mu``.

    h(z) = (z/|z|) exp( int_{r0}^{|z|} (1 + k(t)) / (1 - k(t)) dt / t ).
    The domain is 0 < |z| < r_max; radii whose integration interval meets
    |k| >= 1 raise DivergenceError.
    """
    r0 = float(base_radius)
    if not r0 > 0:
        raise PreconditionError("base radius must be positive")
    k = spec.k
    cache: dict[float, float] = {}

    def log_modulus(r: float) -> float:
        if r in cache:
            return cache[r]
        lo, hi = min(r0, r), max(r0, r)
        bad = _find_singular_radius(k, lo, hi)
        if bad is not None:
            raise DivergenceError(f"radial integral diverges: |k| reaches 1 at radius {bad:.12g}", bad)
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                # integrate in log t, where the integrand is (1 + k)/(1 - k)
                val, _ = integrate.quad(lambda s: (1 + k(np.exp(s))) / (1 - k(np.exp(s))),
                                        np.log(r0), np.log(r), epsabs=1e-13, epsrel=1e-12, limit=200)
            except integrate.IntegrationWarning as exc:
                raise DivergenceError(f"radial integral did not converge up to radius {r}: {exc}", r)
        cache[r] = val
        return val

    def rho(r):
        r = np.atleast_1d(r)
        return np.exp(np.array([log_modulus(float(t)) for t in r]))

    def drho(r):
        r = np.atleast_1d(r)
        kr = np.array([k(float(t)) for t in r])
        return rho(r) * (1 + kr) / ((1 - kr) * r)

    f = radial_stretch_map(2, rho, drho, punctured_ball(r_max),
                           name or f"beltrami[{spec.name}]", {"base_radius": r0})
    return MappingField(2, f.func, f.domain, f.jac, name=f.name, params=f.params, beltrami=spec)


# -- catalog -----------------------------------------------------------------

def k_tau(t: float) -> float:
    return t


def k_beta(beta: float) -> Callable[[float], float]:
    def k(t: float) -> float:
        tb = t ** beta
        return (1 - tb) / (1 + tb)
    return k


def identity_map(n: int = 2) -> MappingField:
    n = check_dimension(n)
    return MappingField(n, lambda X: X.copy(), lambda X: np.ones(len(X), bool),
                        lambda X: np.broadcast_to(np.eye(n), (len(X), n, n)).copy(),
                        name="identity", params={"n": n})


def linear_map(A) -> MappingField:
    A = np.array(A, dtype=float)
    n = check_dimension(A.shape[0])
    if A.shape != (n, n):
        raise PreconditionError("linear map needs a square matrix")
    return MappingField(n, lambda X: X @ A.T, lambda X: np.ones(len(X), bool),
                        lambda X: np.broadcast_to(A, (len(X), n, n)).copy(),
                        name="linear", params={"A": A.tolist()})


def inversion_map(n: int = 2) -> MappingField:
    """x -> x / |x|^2 on R^n minus the origin."""
    n = check_dimension(n)

    def func(X):
        return X / np.sum(X * X, axis=1)[:, None]

    def jac(X):
        r2 = np.sum(X * X, axis=1)
        eye = np.broadcast_to(np.eye(n), (len(X), n, n))
        return (eye - 2 * X[:, :, None] * X[:, None, :] / r2[:, None, None]) / r2[:, None, None]

    return MappingField(n, func, lambda X: np.linalg.norm(X, axis=1) > 0, jac,
                        name="inversion", params={"n": n})


def radial_exp_map(beta: float = 0.5) -> MappingField:
    """f(z) = exp(i theta + (r^beta - 1) / (beta r^beta)) on the punctured unit disk."""
    if not 0 < beta < 1:
        raise PreconditionError("beta must lie in (0, 1)")

    def rho(r):
        return np.exp((1 - r ** (-beta)) / beta)

    def drho(r):
        return rho(r) * r ** (-beta - 1)

    return radial_stretch_map(2, rho, drho, punctured_ball(1.0), "radial_exp", {"beta": beta})


def catalog(name: str, **params) -> MappingField:
    """Named example maps. See ``CATALOG`` for the accepted names."""
    try:
        builder = CATALOG[name]
    except KeyError:
        raise CatalogError(f"unknown catalog map {name!r}; known: {sorted(CATALOG)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise CatalogError(f"bad parameters for {name!r}: {exc}") from None


def _beltrami_k_tau(base_radius: float = 0.5, r_max: float = 1.0) -> MappingField:
    return beltrami_map(BeltramiSpec(k_tau, "tau"), base_radius, r_max, name="beltrami_k_tau")


def _beltrami_k_beta(beta: float = 0.5, base_radius: float = 1.0, r_max: float = 1.0) -> MappingField:
    if not 0 < beta < 1:
        raise PreconditionError("beta must lie in (0, 1)")
    f = beltrami_map(BeltramiSpec(k_beta(beta), f"beta={beta}"), base_radius, r_max,
                     name="beltrami_k_beta")
    f.params["beta"] = beta
    return f


CATALOG: dict[str, Callable[..., MappingField]] = {
    "identity": identity_map,
    "linear": linear_map,
    "inversion": inversion_map,
    "radial_exp": radial_exp_map,
    "beltrami_k_tau": _beltrami_k_tau,
    "beltrami_k_beta": _beltrami_k_beta,
}
