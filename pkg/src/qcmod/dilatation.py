"""Pointwise distortion: minimal stretch, inner and angular dilatations.

Degenerate points follow fixed conventions: if f'(x) = 0 both K_I and D_f
equal 1; if f'(x) != 0 but J(x, f) = 0 both are +inf.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import QCError, as_point
from .mapping import JacobianMatrix, MappingField, beltrami_coefficient

MAX_RECENTRES = 500
PATCH_SIDE = 17
SAMPLING_DIRECTIONS = 4096
ALIGN_CUTOFF = 1e-6


class DegeneracyError(QCError, ValueError):
    pass


def _as_jacobian(A) -> JacobianMatrix:
    return A if isinstance(A, JacobianMatrix) else JacobianMatrix.from_matrix(A)


def inner_dilatation(A, n: int | None = None) -> float:
    """K_I = |det A| / l(A)^n."""
    A = _as_jacobian(A)
    n = A.n if n is None else n
    if A.is_zero:
        return 1.0
    if A.degenerate or A.det == 0:
        return np.inf
    return abs(A.det) / A.l_min ** n


def _unit(u) -> np.ndarray:
    u = as_point(u)
    nu = np.linalg.norm(u)
    if abs(nu - 1.0) > 1e-9:
        raise QCError("u must be a unit vector")
    return u / nu


def _fibonacci_sphere(m: int) -> np.ndarray:
    i = np.arange(m) + 0.5
    z = 1 - 2 * i / m
    phi = np.pi * (1 + 5 ** 0.5) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _stretch_ratio(A: np.ndarray, H: np.ndarray, u: np.ndarray) -> np.ndarray:
    align = np.abs(H @ u)
    vals = np.linalg.norm(H @ A.T, axis=1)
    with np.errstate(divide="ignore"):
        return np.where(align > ALIGN_CUTOFF, vals / align, np.inf)


def sampled_angular_l(A, u, directions: int = SAMPLING_DIRECTIONS, zoom_levels: int = 40) -> float:
    """min_{|h|=1} |A h| / |(h, u)| by direction sampling.

    A global pass evaluates ``directions`` unit vectors; after it, the sample
    set is a small grid patch around the current best. The patch grows
    while the best point lands on its edge and shrinks once it is interior,
    so narrow valleys of badly conditioned matrices are followed rather
    than cut off. ``zoom_levels``
    counts shrinks. Independent of the closed form used by :func:`angular_l`.
    """
    A = _as_jacobian(A).matrix
    u = _unit(u)
    n = A.shape[0]
    if n == 2:
        t = 2 * np.pi * np.arange(directions) / directions
        H = np.stack([np.cos(t), np.sin(t)], axis=1)
    elif n == 3:
        H = _fibonacci_sphere(directions)
    else:
        rng = np.random.default_rng(0)
        H = rng.standard_normal((directions, n))
        H /= np.linalg.norm(H, axis=1, keepdims=True)
    vals = _stretch_ratio(A, H, u)
    best = H[int(np.argmin(vals))]
    best_val = float(vals.min())
    width = 2 * np.pi / directions if n == 2 else 4.0 * np.sqrt(4 * np.pi / directions)
    shrinks, moves = 0, 0
    while shrinks < zoom_levels and moves < MAX_RECENTRES:
        if n == 2:
            t0 = np.arctan2(best[1], best[0])
            side = PATCH_SIDE
            t = t0 + np.linspace(-width, width, side)
            H = np.stack([np.cos(t), np.sin(t)], axis=1)
            idx = np.arange(side)[:, None]
        else:
            # orthonormal tangent frame at the current best direction
            q, _ = np.linalg.qr(np.column_stack([best, np.eye(n)]))
            T = q[:, 1:n]
            side = PATCH_SIDE
            g = np.linspace(-width, width, side)
            offs = np.stack(np.meshgrid(*([g] * (n - 1)), indexing="ij"), -1).reshape(-1, n - 1)
            idx = np.stack(np.meshgrid(*([np.arange(side)] * (n - 1)), indexing="ij"), -1).reshape(-1, n - 1)
            H = best + offs @ T.T
            H /= np.linalg.norm(H, axis=1, keepdims=True)
        vals = _stretch_ratio(A, H, u)
        j = int(np.argmin(vals))
        on_edge = bool(np.any((idx[j] == 0) | (idx[j] == side - 1)))
        if vals[j] < best_val:
            best, best_val = H[j], float(vals[j])
        if on_edge and vals[j] <= best_val:
            width = min(2 * width, 1.0)
            moves += 1
        else:
            width *= 0.5
            shrinks += 1
    return best_val


def angular_l(A, u) -> float:
    """l_f = min_{|h|=1} |A h| / |(h, u)|, in closed form 1 / |A^{-T} u|.

    Falls back to :func:`sampled_angular_l` when A is singular.
    """
    J = _as_jacobian(A)
    u = _unit(u)
    if J.is_zero:
        return 0.0
    if J.degenerate:
        return sampled_angular_l(J, u)
    w = np.linalg.solve(J.matrix.T, u)
    return 1.0 / float(np.linalg.norm(w))


def angular_dilatation(A, u, n: int | None = None) -> float:
    """D_f = |det A| / l_f^n."""
    J = _as_jacobian(A)
    n = J.n if n is None else n
    if J.is_zero:
        return 1.0
    if J.degenerate or J.det == 0:
        return np.inf
    return abs(J.det) / angular_l(J, u) ** n


def beltrami_angular_dilatation(mu: complex, z: complex, z0: complex = 0j) -> float:
    """|1 - conj(z - z0)/(z - z0) mu|^2 / (1 - |mu|^2)."""
    mu, z, z0 = complex(mu), complex(z), complex(z0)
    if abs(mu) >= 1:
        raise DegeneracyError(f"|mu| = {abs(mu)} >= 1")
    if z == z0:
        raise DegeneracyError("z must differ from z0")
    w = z - z0
    return abs(1 - (w.conjugate() / w) * mu) ** 2 / (1 - abs(mu) ** 2)


def beltrami_inner_dilatation(mu: complex) -> float:
    """(1 + |mu|) / (1 - |mu|)."""
    m = abs(complex(mu))
    if m >= 1:
        raise DegeneracyError(f"|mu| = {m} >= 1")
    return (1 + m) / (1 - m)


@dataclass(frozen=True)
class DilatationSample:
    x: np.ndarray
    x0: np.ndarray
    K_I: float
    D_f: float
    l_f: float
    l_min: float
    jacobian_det: float
    degenerate: bool
    mu: complex | None = None
    D_f_beltrami: float | None = None
    cross_check_ok: bool | None = None

    def to_dict(self) -> dict:
        d = {
            "x": self.x.tolist(), "x0": self.x0.tolist(), "K_I": self.K_I, "D_f": self.D_f,
            "l_f": self.l_f, "l_min": self.l_min, "jacobian_det": self.jacobian_det,
            "degenerate": self.degenerate,
        }
        if self.mu is not None:
            d.update(mu_re=self.mu.real, mu_im=self.mu.imag, D_f_beltrami=self.D_f_beltrami,
                     cross_check_ok=self.cross_check_ok)
        return d


def dilatation_arrays(A: np.ndarray, U: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorised K_I, D_f, l_f, l_min and det for Jacobians ``(N, n, n)`` and unit vectors ``(N, n)``."""
    A = np.asarray(A, dtype=float)
    N, n, _ = A.shape
    # K_I and D_f are scale invariant; normalising keeps tiny or huge Jacobians in range
    c = np.abs(A.reshape(N, -1)).max(axis=1)
    zero = c == 0
    c = np.where(zero, 1.0, c)
    A = A / c[:, None, None]
    s = np.linalg.svd(A, compute_uv=False)
    det = np.linalg.det(A)
    degen = (s[:, -1] <= 1e-14 * np.maximum(s[:, 0], 1e-300)) & ~zero
    ok = ~(zero | degen)

    l_f = np.zeros(N)
    if ok.any():
        w = np.linalg.solve(np.swapaxes(A[ok], 1, 2), U[ok][:, :, None])[:, :, 0]
        l_f[ok] = 1.0 / np.linalg.norm(w, axis=1)
    for i in np.flatnonzero(degen):
        l_f[i] = sampled_angular_l(A[i], U[i])

    K = np.full(N, np.inf)
    D = np.full(N, np.inf)
    K[ok] = np.abs(det[ok]) / s[ok, -1] ** n
    D[ok] = np.abs(det[ok]) / l_f[ok] ** n
    K[zero] = 1.0
    D[zero] = 1.0
    with np.errstate(over="ignore", under="ignore"):
        det_true = det * c ** n
    return {"K_I": K, "D_f": D, "l_f": l_f * c, "l_min": s[:, -1] * c, "det": det_true,
            "degenerate": degen | zero}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QCMOD_THREADS", "1")))
    except ValueError:
        return 1


def field_arrays(f: MappingField, x0, X) -> dict[str, np.ndarray]:
    """Dilatation arrays of f at points X relative to base point x0."""
    x0 = as_point(x0, f.n)
    X = f.check_domain(X)
    diff = X - x0
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0):
        bad = int(np.flatnonzero(r == 0)[0])
        raise QCError(f"sample {bad} coincides with the base point")
    A = f.jacobians(X)
    out = dilatation_arrays(A, diff / r[:, None])
    if f.n == 2:
        out.update(_beltrami_path(out, A, diff))
    return out


def _beltrami_path(gen: dict, A: np.ndarray, diff: np.ndarray, rtol: float = 1e-9) -> dict:
    mu = beltrami_coefficient(A)
    w = diff[:, 0] + 1j * diff[:, 1]
    valid = (gen["det"] > 0) & (np.abs(mu) < 1)
    Db = np.full(len(mu), np.nan)
    wv, mv = w[valid], mu[valid]
    Db[valid] = np.abs(1 - (np.conj(wv) / wv) * mv) ** 2 / (1 - np.abs(mv) ** 2)
    checked = valid & (np.abs(mu) <= 0.99)
    agree = np.ones(len(mu), bool)
    agree[checked] = np.abs(Db[checked] - gen["D_f"][checked]) <= rtol * np.maximum(1.0, gen["D_f"][checked])
    return {"mu": mu, "D_f_beltrami": Db, "cross_check_ok": np.where(checked, agree, True)}


def dilatation_field(f: MappingField, x0, samples, chunk: int = 4096) -> list[DilatationSample]:
    """Per-sample dilatations; 2-D maps also carry the Beltrami-formula value."""
    x0 = as_point(x0, f.n)
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    X = f.check_domain(X)
    hits = np.flatnonzero(np.linalg.norm(X - x0, axis=1) == 0)
    if hits.size:
        raise QCError(f"sample {int(hits[0])} coincides with the base point")
    chunks = [X[i:i + chunk] for i in range(0, len(X), chunk)]

    def work(C):
        return field_arrays(f, x0, C)

    if _threads() > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(_threads()) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(C) for C in chunks]

    out = []
    for C, P in zip(chunks, parts):
        for i in range(len(C)):
            mu = D_b = ok = None
            if "mu" in P:
                mu = complex(P["mu"][i])
                D_b = float(P["D_f_beltrami"][i])
                ok = bool(P["cross_check_ok"][i])
            out.append(DilatationSample(C[i].copy(), x0, float(P["K_I"][i]), float(P["D_f"][i]),
                                        float(P["l_f"][i]), float(P["l_min"][i]), float(P["det"][i]),
                                        bool(P["degenerate"][i]), mu, D_b, ok))
    return out
