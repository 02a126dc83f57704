"""Geometry, measure and quadrature primitives.

Everything here is immutable after construction. Points are plain float
arrays of shape ``(n,)``; batches are ``(N, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy.special import roots_jacobi

MIN_DIM = 2
MAX_DIM = 8


class QCError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(QCError, ValueError):
    pass


class DomainError(QCError, ValueError):
    pass


class PreconditionError(QCError, ValueError):
    pass


def check_dimension(n: int) -> int:
    if int(n) != n or n < MIN_DIM:
        raise DimensionError(f"dimension must be an integer >= {MIN_DIM}, got {n!r}")
    return int(n)


def as_point(x, n: int | None = None) -> np.ndarray:
    """Validate and return ``x`` as a finite float vector."""
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.size < MIN_DIM:
        raise DimensionError(f"points need at least {MIN_DIM} coordinates")
    if n is not None and p.size != n:
        raise DimensionError(f"expected a point in R^{n}, got length {p.size}")
    if not np.all(np.isfinite(p)):
        raise DomainError("point coordinates must be finite")
    return p


def sphere_area_constant(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n, 2 pi^{n/2} / Gamma(n/2)."""
    n = check_dimension(n)
    return 2.0 * pi ** (n / 2) / gamma(n / 2)


def ball_volume_constant(n: int) -> float:
    """Volume of the unit ball in R^n, pi^{n/2} / Gamma(n/2 + 1)."""
    n = check_dimension(n)
    return pi ** (n / 2) / gamma(n / 2 + 1)


@dataclass(frozen=True)
class Annulus:
    """Open spherical ring ``r_inner < |x - center| < r_outer``."""

    center: np.ndarray
    r_inner: float
    r_outer: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not (0 < self.r_inner < self.r_outer < np.inf):
            raise PreconditionError(
                f"annulus radii must satisfy 0 < r1 < r2 < inf, got {self.r_inner}, {self.r_outer}")

    @property
    def n(self) -> int:
        return self.center.size

    def contains(self, X) -> np.ndarray:
        d = np.linalg.norm(np.atleast_2d(X) - self.center, axis=1)
        return (d > self.r_inner) & (d < self.r_outer)


@dataclass(frozen=True)
class CellGrid:
    """Axis-aligned uniform grid of rectangular cells over a bounding box."""

    lower: np.ndarray
    upper: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        lo = as_point(self.lower)
        hi = as_point(self.upper, lo.size)
        shape = tuple(int(s) for s in np.broadcast_to(self.shape, lo.shape))
        check_dimension(lo.size)
        if lo.size > MAX_DIM:
            raise DimensionError(f"grids support n <= {MAX_DIM}")
        if np.any(hi <= lo):
            raise PreconditionError("grid upper corner must exceed lower corner on every axis")
        if min(shape) < 1:
            raise PreconditionError("grid resolution must be positive on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def square(cls, half_width: float, resolution: int, n: int = 2, center=None) -> "CellGrid":
        c = np.zeros(n) if center is None else as_point(center, n)
        return cls(c - half_width, c + half_width, (resolution,) * n)

    @classmethod
    def covering(cls, points: np.ndarray, resolution: int, pad: float = 0.01) -> "CellGrid":
        """Smallest square-celled box around ``points`` with relative padding."""
        lo, hi = points.min(axis=0), points.max(axis=0)
        span = float(np.max(hi - lo)) * (1 + 2 * pad)
        mid = 0.5 * (lo + hi)
        return cls(mid - span / 2, mid + span / 2, (resolution,) * points.shape[1])

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def edges(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.shape)

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.edges))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def cell_centers(self) -> np.ndarray:
        axes = [self.lower[i] + (np.arange(s) + 0.5) * self.edges[i] for i, s in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, X, atol: float = 1e-12) -> np.ndarray:
        X = np.atleast_2d(X)
        slack = atol * (self.upper - self.lower)
        return np.all((X >= self.lower - slack) & (X <= self.upper + slack), axis=1)

    def locate(self, X) -> np.ndarray:
        """Flat (C-order) cell index of every row of ``X``; points on the box edge snap inward."""
        idx = np.floor((np.atleast_2d(X) - self.lower) / self.edges).astype(np.int64)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.shape)


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and weights for integrating over ``S(center, radius)``.

    ``integrate(g)`` approximates the surface integral with respect to the
    (n-1)-dimensional Hausdorff measure; weights sum to the sphere's area.
    """

    center: np.ndarray
    radius: float
    nodes: np.ndarray
    weights: np.ndarray
    directions: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.center.size

    @property
    def area(self) -> float:
        return sphere_area_constant(self.n) * self.radius ** (self.n - 1)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def rescaled(self, center, radius: float) -> "SphereQuadrature":
        """Same angular rule moved to another sphere."""
        c = as_point(center, self.n)
        scale = (radius / self.radius) ** (self.n - 1)
        return SphereQuadrature(c, float(radius), c + radius * self.directions,
                                self.weights * scale, self.directions)


def _angular_counts(d: int, target: int) -> list[int]:
    # counts[0] is the azimuth; the rest are polar angles
    base = max(2, int(np.floor(target ** (1.0 / d))))
    counts = [base] * d
    counts[0] = max(counts[0], 3)
    # each bump multiplies the product by at most 1.5, so we stop below 1.5 * target
    while np.prod(counts) < target:
        i = int(np.argmin(counts))
        counts[i] += 1
    return counts


@lru_cache(maxsize=64)
def _unit_sphere_rule(n: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    if n == 2:
        t = 2 * np.pi * (np.arange(target) + 0.5) / target
        dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
        return dirs, np.full(target, 2 * np.pi / target)

    # Hyperspherical coordinates x_1 = cos(p_1), x_2 = sin(p_1)cos(p_2), ...
    # with the last pair carrying the azimuth. Polar angle j has weight
    # sin^{n-1-j}; substituting t = cos(p) gives a Gauss-Jacobi rule.
    d = n - 1
    counts = _angular_counts(d, target)
    n_az, polar_counts = counts[0], counts[1:]
    factors = []
    for j, m in enumerate(polar_counts, start=1):
        k = n - 1 - j
        a = (k - 1) / 2.0
        t, w = roots_jacobi(m, a, a)
        factors.append((t, w))
    az = 2 * np.pi * (np.arange(n_az) + 0.5) / n_az
    az_w = np.full(n_az, 2 * np.pi / n_az)

    grids = np.meshgrid(*[f[0] for f in factors], az, indexing="ij")
    wgrids = np.meshgrid(*[f[1] for f in factors], az_w, indexing="ij")
    cos_p = [g.ravel() for g in grids[:-1]]
    phi = grids[-1].ravel()
    w = np.prod([g.ravel() for g in wgrids], axis=0)

    coords = []
    sin_prod = np.ones_like(phi)
    for c in cos_p:
        coords.append(sin_prod * c)
        sin_prod = sin_prod * np.sqrt(np.clip(1 - c * c, 0.0, None))
    coords.append(sin_prod * np.cos(phi))
    coords.append(sin_prod * np.sin(phi))
    dirs = np.stack(coords, axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs, w


def build_sphere_quadrature(center, radius: float, target_nodes: int = 256) -> SphereQuadrature:
    """Deterministic rule on ``S(center, radius)`` with roughly ``target_nodes`` nodes.

    n = 2 uses equally spaced points; n >= 3 uses a product of Gauss-Jacobi
    rules in the polar angles and a uniform rule in the azimuth.
    """
    c = as_point(center)
    n = check_dimension(c.size)
    if n > MAX_DIM:
        raise DimensionError(f"sphere quadrature supports n <= {MAX_DIM}, got {n}")
    if not radius > 0:
        raise PreconditionError("radius must be positive")
    if target_nodes < 8:
        raise PreconditionError("target_nodes must be >= 8")
    dirs, w = _unit_sphere_rule(n, int(target_nodes))
    return SphereQuadrature(c, float(radius), c + radius * dirs, w * radius ** (n - 1), dirs)


def gauss_legendre(a: float, b: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class ShellIntegral:
    value: float
    abserr: float
    excluded_fraction: float

    @property
    def reliable(self) -> bool:
        return self.excluded_fraction <= 0.01


def shell_integral(F, center, r1: float, r2: float, weight=None, angular_nodes: int = 256,
                   epsrel: float = 1e-10, limit: int = 200) -> ShellIntegral:
    """Integral of ``F(x) * weight(|x - center|)`` over the annulus r1 < |x - center| < r2.

    Decomposes into spheres: an adaptive quadrature in log r of the sphere
    rule applied to F. Nodes where F is +inf are dropped; their share of the
    weighted measure is reported as ``excluded_fraction``.
    """
    import warnings
    from scipy import integrate

    c = as_point(center)
    n = c.size
    if not 0 < r1 < r2:
        raise PreconditionError("need 0 < r1 < r2")
    w = (lambda r: 1.0) if weight is None else weight
    rule = build_sphere_quadrature(c, 1.0, angular_nodes)
    cache: dict[float, tuple[float, float, float]] = {}

    def sphere(s: float):
        if s not in cache:
            r = float(np.exp(s))
            vals = np.asarray(F(c + r * rule.directions), dtype=float)
            bad = ~np.isfinite(vals)
            scale = float(w(r)) * r ** n  # r^{n-1} area factor times dr = r ds
            finite = float(np.dot(rule.weights[~bad], vals[~bad])) * scale
            cache[s] = (finite, float(rule.weights[bad].sum()) * scale, float(rule.weights.sum()) * scale)
        return cache[s]

    a, b = np.log(r1), np.log(r2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(lambda s: sphere(s)[0], a, b, epsrel=epsrel, epsabs=0.0, limit=limit)
        bad_mass = integrate.quad(lambda s: sphere(s)[1], a, b, limit=limit)[0]
        total = integrate.quad(lambda s: sphere(s)[2], a, b, limit=limit)[0]
    return ShellIntegral(float(val), float(err), float(bad_mass / total) if total > 0 else 0.0)
