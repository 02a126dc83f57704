"""Modulus of curve families: closed forms and a discrete estimator.

The discrete problem is

    minimise  sum_c a_c rho_c^n   subject to  (L rho)_k >= 1,  rho >= 0,

where row k of L holds the lengths that curve k spends in each grid cell.
It is solved through its concave dual

    g(lam) = sum lam - (n-1) sum_c a_c (s_c / (n a_c))^{n/(n-1)},  s = L^T lam,

whose maximiser gives rho_c = (s_c / (n a_c))^{1/(n-1)}. Any dual point is
a certified lower bound; rescaling the induced rho to feasibility gives
an upper bound, so every estimate carries its own duality gap.

A curve may be a *ribbon*: a thin strip given by two boundary polylines.
Its constraint is the average line integral over parallel strands
filling the strip. A finite sample of a continuous family (rays of a
ring) is then a partition of the family rather than a sparse subset of
it, and the estimate does not depend on how many rays are drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import qmc

from .conditions import weighted_log_integral
from .core import (
    Annulus, CellGrid, PreconditionError, QCError, check_dimension, sphere_area_constant,
)


class InfeasibleError(QCError, ValueError):
    def __init__(self, message: str, curve: int):
        super().__init__(message)
        self.curve = curve


class BoundingError(QCError, ValueError):
    pass


# -- closed forms ------------------------------------------------------------

def ring_modulus(n: int, r1: float, r2: float) -> float:
    """omega_{n-1} (log(r2 / r1))^{1-n}: curves joining the two boundary spheres of a ring."""
    n = check_dimension(n)
    if not 0 < r1 < r2:
        raise PreconditionError("need 0 < r1 < r2")
    return sphere_area_constant(n) * np.log(r2 / r1) ** (1 - n)


def half_sphere_ray_modulus(n: int, r: float, R: float) -> float:
    """Rays y0 + t e, e in a half sphere, t in [r, R)."""
    if not 0 < r < R:
        raise PreconditionError("need 0 < r < R")
    return 0.5 * ring_modulus(n, r, R)


def radial_weighted_bound(q, n: int, r1: float, r2: float) -> float:
    """omega_{n-1} / I^{n-1} with I = int_{r1}^{r2} dt / (t q(t)^{1/(n-1)}).

    This is int Q rho^n dm for the normalised radial density psi / I,
    psi(t) = 1 / (t q^{1/(n-1)}(t)), when q is the spherical mean of Q.
    """
    n = check_dimension(n)
    I, ok = weighted_log_integral(q, n, r1, r2)
    if not (np.isfinite(I) and I > 0) or not ok:
        raise PreconditionError(f"degenerate profile: I = {I}")
    return sphere_area_constant(n) / I ** (n - 1)


# -- curves ------------------------------------------------------------------

def _polyline(P) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] < 2:
        raise PreconditionError("a polyline needs at least two points")
    if not np.all(np.isfinite(P)):
        raise BoundingError("polyline has non-finite vertices")
    return P


@dataclass(frozen=True)
class Curve:
    """A polyline, optionally widened to a ribbon or a bundle of strands.

    ``ribbon`` is a pair of boundary polylines with the same vertex count
    as ``points``; ``bundle`` is an explicit tuple of strands; ``spread``
    builds strands on demand, ``spread(h)`` returning strands whose
    transverse spacing is about h. In every case the curve's constraint is
    the mean line integral over its strands.
    """

    points: np.ndarray
    ribbon: tuple[np.ndarray, np.ndarray] | None = None
    bundle: tuple[np.ndarray, ...] | None = None
    spread: Callable[[float], tuple[np.ndarray, ...]] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        P = _polyline(self.points)
        object.__setattr__(self, "points", P)
        if self.ribbon is not None:
            left, right = (_polyline(e) for e in self.ribbon)
            if left.shape != P.shape or right.shape != P.shape:
                raise PreconditionError("ribbon edges must match the centre polyline's shape")
            object.__setattr__(self, "ribbon", (left, right))
        if self.bundle is not None:
            object.__setattr__(self, "bundle", tuple(_polyline(s) for s in self.bundle))
        if self.length <= 0:
            raise PreconditionError("curve has zero length")

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    def strands(self, width_step: float | None = None) -> list[np.ndarray]:
        if self.bundle is not None:
            return list(self.bundle)
        if self.spread is not None:
            return list(self.spread(np.inf if width_step is None else width_step))
        if self.ribbon is None or width_step is None:
            return [self.points]
        left, right = self.ribbon
        width = float(np.max(np.linalg.norm(right - left, axis=1)))
        k = max(1, int(np.ceil(width / width_step)))
        return [left + ((j + 0.5) / k) * (right - left) for j in range(k)]

    def mapped(self, f: Callable[[np.ndarray], np.ndarray]) -> "Curve":
        ribbon = None if self.ribbon is None else (f(self.ribbon[0]), f(self.ribbon[1]))
        bundle = None if self.bundle is None else tuple(f(s) for s in self.bundle)
        image = f(self.points)
        spread = None
        if self.spread is not None:
            # strand spacing requested in the image, translated by the centreline's stretch
            scale = self.length / max(float(np.linalg.norm(np.diff(_polyline(image), axis=0), axis=1).sum()), 1e-300)
            src = self.spread
            spread = lambda h: tuple(f(s) for s in src(h * scale))  # noqa: E731
        return Curve(image, ribbon, bundle, spread)

    def vertices(self) -> np.ndarray:
        parts = [self.points]
        if self.ribbon is not None:
            parts.extend(self.ribbon)
        if self.bundle is not None:
            parts.extend(self.bundle)
        if self.spread is not None:
            parts.extend(self.spread(np.inf))
        return np.concatenate(parts)


@dataclass(frozen=True)
class CurveFamily:
    curves: tuple[Curve, ...] = ()
    n: int = 2

    def __post_init__(self):
        curves = tuple(c if isinstance(c, Curve) else Curve(c) for c in self.curves)
        for i, c in enumerate(curves):
            if c.points.shape[1] != self.n:
                raise PreconditionError(f"curve {i} is not in R^{self.n}")
        object.__setattr__(self, "curves", curves)

    @classmethod
    def from_polylines(cls, polylines: Sequence, n: int | None = None) -> "CurveFamily":
        polylines = [np.atleast_2d(np.asarray(p, dtype=float)) for p in polylines]
        if n is None:
            n = polylines[0].shape[1] if polylines else 2
        return cls(tuple(Curve(p) for p in polylines), n)

    def __len__(self) -> int:
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    def __or__(self, other: "CurveFamily") -> "CurveFamily":
        return CurveFamily(self.curves + other.curves, self.n)

    def push_forward(self, f) -> "CurveFamily":
        """Image family, mapping every vertex through f."""
        try:
            curves = tuple(c.mapped(f) for c in self.curves)
        except BoundingError as exc:
            raise BoundingError(f"image family escapes every bounded box: {exc}") from exc
        return CurveFamily(curves, self.n)

    def vertices(self) -> np.ndarray:
        if not self.curves:
            return np.zeros((0, self.n))
        return np.concatenate([c.vertices() for c in self.curves])


def _unit_directions(n: int, count: int) -> np.ndarray:
    if n == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5 ** 0.5) * i
        s = np.sqrt(1 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    from scipy.stats import norm
    h = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    g = norm.ppf(np.clip(h, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _cell_directions(z0: float, z1: float, p0: float, p1: float, m: int) -> np.ndarray:
    """Midpoint rule in (z, phi) on the sphere cell z0 < z < z1, p0 < phi < p1; uniform in area (n = 3)."""
    nz = max(1, int(round(np.sqrt(m * (z1 - z0) / max(p1 - p0, 1e-300)))))
    npz = max(1, int(np.ceil(m / nz)))
    z = z0 + (z1 - z0) * (np.arange(nz) + 0.5) / nz
    p = p0 + (p1 - p0) * (np.arange(npz) + 0.5) / npz
    Z, P = np.meshgrid(z, p, indexing="ij")
    S = np.sqrt(1 - Z ** 2)
    return np.stack([S * np.cos(P), S * np.sin(P), Z], axis=-1).reshape(-1, 3)


def _sphere_partition(rays: int) -> list[tuple[float, float, float, float]]:
    # equal-width bands in z = cos(theta) and equal sectors in azimuth have equal area
    bands = max(1, int(round(np.sqrt(rays / np.pi))))
    sectors = max(1, int(np.ceil(rays / bands)))
    zs = np.linspace(-1, 1, bands + 1)
    ps = np.linspace(0, 2 * np.pi, sectors + 1)
    return [(zs[i], zs[i + 1], ps[j], ps[j + 1]) for i in range(bands) for j in range(sectors)]


def _cell_spread(c: np.ndarray, cell, radii: np.ndarray, min_strands: int):
    z0, z1, p0, p1 = cell
    area = (z1 - z0) * (p1 - p0) * radii[-1] ** 2

    def spread(h: float) -> tuple[np.ndarray, ...]:
        m = min_strands if not np.isfinite(h) else max(min_strands, int(np.ceil(area / h ** 2)))
        return tuple(c + radii[:, None] * d for d in _cell_directions(z0, z1, p0, p1, m))
    return spread


def sample_ring_family(annulus: Annulus, rays: int, vertices: int = 65, ribbons: bool = True,
                       bundle_strands: int = 8) -> CurveFamily:
    """Radial curves from the inner to the outer sphere of ``annulus``.

    In the plane each ray carries the ribbon of its angular sector, so the
    rays partition the ring. For n = 3 the sphere is cut into about
    ``rays`` equal-area cells (bands in cos(theta) times azimuth sectors) and
    each ray is the bundle of directions filling its cell, refined to the
    grid it is measured on (at least ``bundle_strands`` strands). In higher
    dimensions rays are plain, along quasi-uniform directions.
    """
    if rays < 16:
        raise PreconditionError("need at least 16 rays")
    n = annulus.n
    c = annulus.center
    radii = np.geomspace(annulus.r_inner, annulus.r_outer, max(2, vertices))
    curves = []
    if n == 2 and ribbons:
        t = 2 * np.pi * (np.arange(rays) + 0.5) / rays
        half = np.pi / rays
        for tk in t:
            def edge(th):
                return c + radii[:, None] * np.array([np.cos(th), np.sin(th)])
            curves.append(Curve(edge(tk), (edge(tk - half), edge(tk + half))))
    elif n == 3 and ribbons:
        for cell in _sphere_partition(rays):
            e = _cell_directions(*cell, 1)[0]
            curves.append(Curve(c + radii[:, None] * e, spread=_cell_spread(c, cell, radii, bundle_strands)))
    else:
        curves = [Curve(c + radii[:, None] * e) for e in _unit_directions(n, rays)]
    return CurveFamily(tuple(curves), n)


# -- densities ---------------------------------------------------------------

@dataclass(frozen=True)
class DensityGrid:
    grid: CellGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise PreconditionError("density needs one value per grid cell")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise PreconditionError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    def energy(self, n: int) -> float:
        return float(self.grid.cell_measure * np.sum(self.values ** n))

    def to_dict(self, include_values: bool = False) -> dict:
        d = {
            "lower": self.grid.lower.tolist(), "upper": self.grid.upper.tolist(),
            "shape": list(self.grid.shape), "cell_measure": self.grid.cell_measure,
            "support_cells": int(np.count_nonzero(self.values)),
            "max_value": float(self.values.max()) if self.values.size else 0.0,
        }
        if include_values:
            d["values"] = self.values.tolist()
        return d


def line_integral_operator(family: CurveFamily, grid: CellGrid, step: float | None = None) -> sp.csr_matrix:
    """Sparse matrix L with (L rho)_k the discrete line integral of rho along curve k.

    Strands are sampled at segment midpoints with spacing at most ``step``
    (default: a quarter of the smallest cell edge). Ribbons are filled with
    strands at that same transverse spacing; in n >= 3 bundles use twice
    that, which keeps the strand count manageable.
    """
    if grid.n != family.n:
        raise PreconditionError("grid and family dimensions differ")
    h = float(np.min(grid.edges)) / 4 if step is None else float(step)
    h_side = h if grid.n == 2 else 2 * h
    rows, cols, vals = [], [], []
    for k, curve in enumerate(family.curves):
        strands = curve.strands(h_side)
        for P in strands:
            seg = np.diff(P, axis=0)
            L = np.linalg.norm(seg, axis=1)
            m = np.maximum(1, np.ceil(L / h).astype(np.int64))
            idx = np.repeat(np.arange(len(L)), m)
            start = np.repeat(np.cumsum(m) - m, m)
            off = (np.arange(idx.size) - start + 0.5) / m[idx]
            pts = P[idx] + seg[idx] * off[:, None]
            if not np.all(grid.contains(pts)):
                raise PreconditionError(f"curve {k} leaves the grid's bounding box")
            cols.append(grid.locate(pts))
            vals.append((L / m)[idx] / len(strands))
            rows.append(np.full(idx.size, k, dtype=np.int64))
    if not rows:
        return sp.csr_matrix((len(family), grid.size))
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(family), grid.size))
    return M.tocsr()


@dataclass(frozen=True)
class ModulusEstimate:
    value: float
    lower_bound: float
    duality_gap: float
    iterations: int
    admissibility_violation: float
    converged: bool
    density: DensityGrid | None = field(default=None, repr=False)
    curves: int = 0

    @property
    def relative_gap(self) -> float:
        return self.duality_gap / self.value if self.value > 0 else 0.0

    def to_dict(self, include_density: bool = False) -> dict:
        d = {
            "value": self.value, "lower_bound": self.lower_bound, "duality_gap": self.duality_gap,
            "relative_gap": self.relative_gap, "iterations": self.iterations,
            "admissibility_violation": self.admissibility_violation, "converged": self.converged,
            "curves": self.curves,
        }
        if self.density is not None:
            d["density"] = self.density.to_dict(include_density)
        return d


def _dual_ascent(L: sp.csr_matrix, a: float, n: int, budget: int, gap_tol: float):
    """Accelerated projected gradient ascent on the dual, with backtracking and restarts."""
    LT = L.T.tocsr()
    p = 1.0 / (n - 1)
    q = n / (n - 1.0)

    def primal(lam):
        s = LT @ lam
        return (np.maximum(s, 0.0) / (n * a)) ** p

    def dual(lam):
        rho = primal(lam)
        s = LT @ lam
        val = lam.sum() - (n - 1) * a * np.sum((np.maximum(s, 0.0) / (n * a)) ** q)
        return val, 1.0 - L @ rho, rho

    def upper(rho):
        t = float((L @ rho).min())
        if not t > 0:
            return np.inf, rho
        r = rho / t
        return a * float(np.sum(r ** n)), r

    m = L.shape[0]
    lam = np.ones(m)
    # scale so the induced density is admissible on average
    lam *= float(np.mean(L @ primal(lam))) ** (-(n - 1))
    g_lam, grad_lam, rho = dual(lam)
    best_lower = g_lam
    best_upper, best_rho = upper(rho)
    y, g_y, grad_y = lam, g_lam, grad_lam
    t_mom = 1.0
    step = 1.0 / max(1e-300, float(np.abs(grad_lam).max()) + 1.0) * float(lam.mean() + 1e-300)
    it = 0
    for it in range(1, budget + 1):
        while True:
            cand = np.maximum(0.0, y + step * grad_y)
            g_c, grad_c, rho_c = dual(cand)
            d = cand - y
            if g_c >= g_y + grad_y @ d - (d @ d) / (2 * step) - 1e-15 * abs(g_y):
                break
            step *= 0.5
            if step < 1e-300:
                break
        if g_c < g_lam:
            # adaptive restart: drop momentum
            t_mom = 1.0
            y, g_y, grad_y = lam, g_lam, grad_lam
            step *= 0.5
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_mom ** 2))
        y = cand + ((t_mom - 1) / t_next) * (cand - lam)
        y = np.maximum(y, 0.0)
        t_mom = t_next
        lam, g_lam, grad_lam = cand, g_c, grad_c
        g_y, grad_y, _ = dual(y)
        step *= 1.25
        best_lower = max(best_lower, g_lam)
        if it % 5 == 0 or it == budget:
            u, r = upper(rho_c)
            if u < best_upper:
                best_upper, best_rho = u, r
            if best_upper - best_lower <= gap_tol * best_upper:
                break
    u, r = upper(primal(lam))
    if u < best_upper:
        best_upper, best_rho = u, r
    return best_upper, best_lower, best_rho, it


def discrete_modulus(family: CurveFamily, grid: CellGrid, n: int | None = None, budget: int = 5000,
                     gap_tol: float = 1e-4, step: float | None = None) -> ModulusEstimate:
    """Estimate M(family) over densities constant on the cells of ``grid``.

    ``value`` is the energy of an admissible density and ``lower_bound`` a
    dual certificate, so the discrete optimum lies in [lower_bound, value].
    """
    n = family.n if n is None else check_dimension(n)
    if not len(family):
        return ModulusEstimate(0.0, 0.0, 0.0, 0, 0.0, True, DensityGrid(grid, np.zeros(grid.size)), 0)
    L = line_integral_operator(family, grid, step)
    lengths = np.asarray(L.sum(axis=1)).ravel()
    empty = np.flatnonzero(lengths <= 0)
    if empty.size:
        raise InfeasibleError(f"curve {int(empty[0])} has no overlap with the grid", int(empty[0]))

    used = np.unique(L.indices)
    Lu = L[:, used].tocsr()
    a = grid.cell_measure
    upper, lower, rho_u, iters = _dual_ascent(Lu, a, n, budget, gap_tol)
    rho = np.zeros(grid.size)
    rho[used] = rho_u
    violation = max(0.0, 1.0 - float((Lu @ rho_u).min()))
    gap = max(0.0, upper - lower)
    converged = gap <= 0.05 * upper
    return ModulusEstimate(float(upper), float(lower), float(gap), int(iters), violation, bool(converged),
                           DensityGrid(grid, rho), len(family))
