"""Batch front end: YAML config in, JSON report and CSV tables out.

    qcmod modulus --config ring.yaml --out-dir out/ --seed 3

Exit status: 0 on success, 2 when the computation finished but a tested
hypothesis failed or a solver did not converge, 1 on any error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import analysis, conditions, modulus
from .core import Annulus, CellGrid, PreconditionError, QCError, as_point
from .dilatation import field_arrays
from .mapping import MappingField, catalog

COMMANDS = ("dilatation-field", "modulus", "verify-inequality", "classify", "fmo-test", "conditions")
EXIT_OK, EXIT_ERROR, EXIT_HYPOTHESIS = 0, 1, 2

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2}
_eps = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "eps0": _pos, "list": {"type": "array", "items": _pos, "minItems": 5},
        "start": _pos, "stop": _pos, "count": {"type": "integer", "minimum": 5},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "seed": {"type": "integer", "minimum": 0},
        "map": {
            "type": "object", "additionalProperties": False,
            "properties": {"name": {"type": "string"}, "params": {"type": "object"},
                           "samples": {"type": "string"}},
        },
        "geometry": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 2, "maximum": 8},
                "center": _point, "r_inner": _pos, "r_outer": _pos,
                "resolution": {"type": "integer", "minimum": 2},
                "rays": {"type": "integer", "minimum": 16},
                "vertices": {"type": "integer", "minimum": 2},
                "ribbons": {"type": "boolean"},
                "radii": {"type": "array", "items": _pos, "minItems": 1},
                "angles": {"type": "integer", "minimum": 1},
                "random_points": {"type": "integer", "minimum": 0},
                "curves": {"type": "array", "items": {"type": "array", "items": _point, "minItems": 2}},
                "half_width": _pos,
            },
        },
        "Q": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "power", "log_power", "angular_dilatation"]},
                "value": _num, "exponent": _num, "scale": _pos,
            },
        },
        "route": {"enum": [r.value for r in analysis.Route]},
        "eps": _eps,
        "classify": {
            "type": "object", "additionalProperties": False,
            "properties": {"C": _pos, "p": _pos, "A": _pos, "M": _pos, "alpha": _pos, "delta": _pos,
                           "R": _pos, "domination_samples": {"type": "integer", "minimum": 1000}},
        },
        "rho": {
            "type": "object", "additionalProperties": False,
            "properties": {"kind": {"enum": ["extremal", "weighted"]}, "scale": _pos},
        },
        "m": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {"modulus_gap": _pos, "inequality": _pos, "slope": _pos, "stability": _pos,
                           "budget": {"type": "integer", "minimum": 1}},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"stem": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}, "csv": {"type": "boolean"}},
        },
    },
}

DEFAULT_TOLERANCES = {"modulus_gap": 1e-4, "inequality": 0.03, "slope": conditions.SLOPE_TOL,
                      "stability": 0.05, "budget": 5000}


class ConfigError(QCError, ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# -- deterministic output ----------------------------------------------------

def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 0) -> str:
    """JSON with sorted keys and floats at 17 significant digits; inf and nan become strings."""
    obj = _plain(obj)
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_float(float(v)).strip('"') if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps(config).encode()).hexdigest()


# -- sampled maps ------------------------------------------------------------

@dataclass(frozen=True)
class SampledMap:
    """Point samples (x, f(x)) of a map near a singular point; no derivatives."""

    n: int
    X: np.ndarray
    F: np.ndarray
    b: np.ndarray | None = None
    name: str = "samples"

    def jacobians(self, X):
        raise PreconditionError("sampled maps carry no Jacobian; derivative-based operations are unavailable")

    def envelope(self, b=None, rtol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Distinct sample radii |x - b| (merged within rtol) and the max of |f| on each."""
        b = self._base(b)
        r = np.linalg.norm(self.X - b, axis=1)
        v = np.linalg.norm(self.F, axis=1)
        order = np.argsort(r)
        r, v = r[order], v[order]
        groups = np.concatenate([[0], np.flatnonzero(np.diff(r) > rtol * r[1:]) + 1])
        radii = r[groups]
        return radii, np.maximum.reduceat(v, groups)

    def growth_envelope(self, b, eps) -> np.ndarray:
        """max |f| over samples in the shell around each eps; shells meet at geometric midpoints."""
        b = self._base(b)
        eps = np.asarray(eps, dtype=float)
        r = np.linalg.norm(self.X - b, axis=1)
        v = np.linalg.norm(self.F, axis=1)
        mids = np.sqrt(eps[:-1] * eps[1:])
        hi = np.concatenate([[eps[0] ** 2 / mids[0]], mids]) if len(eps) > 1 else eps * 1.5
        lo = np.concatenate([mids, [eps[-1] ** 2 / mids[-1]]]) if len(eps) > 1 else eps / 1.5
        out = np.full(len(eps), np.nan)
        for k in range(len(eps)):
            sel = (r > lo[k]) & (r <= hi[k])
            if sel.any():
                out[k] = v[sel].max()
        return out

    def _base(self, b):
        if b is None:
            if self.b is None:
                raise PreconditionError("no base point given and the file header has none")
            return self.b
        return as_point(b, self.n)


def ingest_samples(path) -> SampledMap:
    """Parse a sample file.

    The first line is a header ``# n=<dim> count=<rows> [b=<c1>,<c2>,...]``;
    every following non-blank line holds 2n numbers, x then f(x), separated
    by whitespace or commas.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ConfigError("missing header line '# n=... count=...'", f"{path}:1")
    header = {}
    for tok in lines[0][1:].split():
        if "=" not in tok:
            raise ConfigError(f"bad header token {tok!r}", f"{path}:1")
        k, v = tok.split("=", 1)
        header[k] = v
    try:
        n = int(header["n"])
        count = int(header["count"]) if "count" in header else None
        b = np.array([float(t) for t in header["b"].split(",")]) if "b" in header else None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad header: {exc}", f"{path}:1") from None
    if n < 2:
        raise ConfigError("dimension must be >= 2", f"{path}:1")
    if b is not None and b.size != n:
        raise ConfigError("base point has the wrong dimension", f"{path}:1")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        toks = s.replace(",", " ").split()
        if len(toks) != 2 * n:
            raise ConfigError(f"row {lineno} has {len(toks)} values, expected {2 * n}", f"{path}:{lineno}")
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            raise ConfigError(f"row {lineno} has a non-numeric value", f"{path}:{lineno}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"row {lineno} has a NaN or infinite value", f"{path}:{lineno}")
        rows.append(vals)
    if not rows:
        raise ConfigError("no sample rows", str(path))
    if count is not None and count != len(rows):
        raise ConfigError(f"header declares {count} rows, file has {len(rows)}", str(path))
    A = np.array(rows)
    return SampledMap(n, A[:, :n], A[:, n:], b, name=f"samples:{path.name}")


# -- config ------------------------------------------------------------------

def load_config(path, base_dir: Path | None = None) -> dict:
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from None
    return validate_config(cfg, path.parent if base_dir is None else base_dir)


def validate_config(cfg, base_dir: Path = Path(".")) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, ".".join(str(p) for p in e.absolute_path) or "<root>")
    cfg = copy.deepcopy(cfg)
    samples = cfg.get("map", {}).get("samples")
    if samples is not None:
        p = Path(samples)
        p = p if p.is_absolute() else base_dir / p
        if not p.is_file():
            raise ConfigError(f"sample file {samples!r} not found", "map.samples")
        cfg["map"]["samples"] = str(p)
    g = cfg.get("geometry", {})
    if "r_inner" in g and "r_outer" in g and not g["r_inner"] < g["r_outer"]:
        raise ConfigError("r_inner must be below r_outer", "geometry.r_inner")
    return cfg


def _tolerances(cfg: dict) -> dict:
    return {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}


def _map(cfg: dict, need_jacobian: bool = True):
    spec = cfg.get("map")
    if not spec:
        raise ConfigError("a map is required", "map")
    if "samples" in spec:
        if need_jacobian:
            raise ConfigError("this command needs derivatives; sampled maps have none", "map.samples")
        return ingest_samples(spec["samples"])
    if "name" not in spec:
        raise ConfigError("give a catalog name or a samples file", "map")
    try:
        return catalog(spec["name"], **spec.get("params", {}))
    except QCError as exc:
        raise ConfigError(str(exc), "map") from None


def _geometry(cfg: dict) -> dict:
    return cfg.get("geometry", {})


def _center(cfg: dict, n: int) -> np.ndarray:
    g = _geometry(cfg)
    c = np.asarray(g.get("center", [0.0] * n), dtype=float)
    if c.size != n:
        raise ConfigError(f"center must have {n} coordinates", "geometry.center")
    return c


def _annulus(cfg: dict, n: int) -> Annulus:
    g = _geometry(cfg)
    for key in ("r_inner", "r_outer"):
        if key not in g:
            raise ConfigError("required", f"geometry.{key}")
    return Annulus(_center(cfg, n), g["r_inner"], g["r_outer"])


def _eps(cfg: dict) -> tuple[float, np.ndarray]:
    e = cfg.get("eps", {})
    eps0 = float(e.get("eps0", 0.5))
    if "list" in e:
        return eps0, np.asarray(e["list"], dtype=float)
    start = float(e.get("start", eps0 / 10))
    stop = float(e.get("stop", eps0 * 1e-5))
    return eps0, np.geomspace(start, stop, int(e.get("count", 9)))


def _Q(cfg: dict, center: np.ndarray, f=None):
    spec = cfg.get("Q")
    if spec is None:
        raise ConfigError("a Q specification is required", "Q")
    kind, c = spec["kind"], float(spec.get("scale", 1.0))

    def radius(X):
        return np.linalg.norm(np.atleast_2d(X) - center, axis=1)

    if kind == "constant":
        v = float(spec.get("value", 1.0))
        return (lambda X: np.full(len(np.atleast_2d(X)), c * v)), f"{c * v:g}"
    if kind == "power":
        a = float(spec.get("exponent", 0.0))
        return (lambda X: c * radius(X) ** a), f"{c:g}*|x-b|^{a:g}"
    if kind == "log_power":
        a = float(spec.get("exponent", 1.0))
        return (lambda X: c * np.log(1.0 / radius(X)) ** a), f"{c:g}*log(1/|x-b|)^{a:g}"
    if not isinstance(f, MappingField):
        raise ConfigError("angular_dilatation needs a catalog map", "Q.kind")
    D = analysis.angular_dilatation_field(f, center)
    return (lambda X: c * D(X)), f"{c:g}*D_f(x,b) of {f.name}"


# -- commands ----------------------------------------------------------------

@dataclass
class Outcome:
    report: dict
    tables: dict
    status: int


def _points(cfg: dict, n: int, center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    g = _geometry(cfg)
    radii = np.asarray(g.get("radii", [0.1 * k for k in range(1, 10)]), dtype=float)
    k = int(g.get("angles", 1))
    if n == 2:
        t = 2 * np.pi * np.arange(k) / k
        dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        dirs = np.eye(n)[:1] if k == 1 else modulus._unit_directions(n, k)
    pts = (center + radii[:, None, None] * dirs[None]).reshape(-1, n)
    m = int(g.get("random_points", 0))
    if m:
        u = rng.standard_normal((m, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.uniform(radii.min(), radii.max(), m)
        pts = np.concatenate([pts, center + r[:, None] * u])
    return pts


def cmd_dilatation_field(cfg: dict, rng) -> Outcome:
    f = _map(cfg)
    x0 = _center(cfg, f.n)
    X = _points(cfg, f.n, x0, rng)
    F = field_arrays(f, x0, X)
    r = np.linalg.norm(X - x0, axis=1)
    header = [f"x{i + 1}" for i in range(f.n)] + ["r", "K_I", "D_f", "l_f", "l_min", "det"]
    cols = [X[:, i] for i in range(f.n)] + [r, F["K_I"], F["D_f"], F["l_f"], F["l_min"], F["det"]]
    ok = True
    if "mu" in F:
        header += ["mu_abs", "D_f_beltrami"]
        cols += [np.abs(F["mu"]), F["D_f_beltrami"]]
        ok = bool(np.all(F["cross_check_ok"]))
    ordering = bool(np.all(F["D_f"] <= F["K_I"] * (1 + 1e-9)))
    report = {"map": f.name, "map_params": f.params, "x0": x0, "samples": len(X),
              "cross_check_ok": ok, "ordering_ok": ordering,
              "D_f_max": float(np.max(F["D_f"])), "K_I_max": float(np.max(F["K_I"]))}
    rows = list(zip(*cols))
    return Outcome(report, {"field": (header, rows)}, EXIT_OK if ok and ordering else EXIT_HYPOTHESIS)


def cmd_modulus(cfg: dict, rng) -> Outcome:
    g = _geometry(cfg)
    tol = _tolerances(cfg)
    n = int(g.get("n", len(g.get("center", [0, 0]))))
    if "curves" in g:
        family = modulus.CurveFamily.from_polylines(g["curves"], n)
        hw = float(g.get("half_width", 1.0))
        grid = CellGrid.square(hw, int(g.get("resolution", 64)), n, _center(cfg, n))
        analytic = 0.0 if not len(family) else None
        ring = None
    else:
        ring = _annulus(cfg, n)
        family = modulus.sample_ring_family(ring, int(g.get("rays", 256)), int(g.get("vertices", 65)),
                                            bool(g.get("ribbons", True)))
        grid = CellGrid.square(float(g.get("half_width", ring.r_outer)), int(g.get("resolution", 256)), n,
                               ring.center)
        analytic = modulus.ring_modulus(n, ring.r_inner, ring.r_outer)
    est = modulus.discrete_modulus(family, grid, n, budget=int(tol["budget"]), gap_tol=tol["modulus_gap"])
    report = {"estimate": est.to_dict(), "analytic": analytic, "n": n, "curves": len(family),
              "grid": {"shape": list(grid.shape), "lower": grid.lower, "upper": grid.upper}}
    if analytic:
        report["relative_error"] = est.value / analytic - 1
    tables = {}
    if ring is not None and est.density is not None:
        centers = grid.cell_centers()
        rr = np.linalg.norm(centers - ring.center, axis=1)
        keep = est.density.values > 0
        edges = np.geomspace(ring.r_inner, ring.r_outer, 33)
        idx = np.digitize(rr[keep], edges) - 1
        vals = est.density.values[keep]
        rows = []
        for k in range(len(edges) - 1):
            sel = idx == k
            if sel.any():
                rmid = math.sqrt(edges[k] * edges[k + 1])
                rows.append((rmid, float(vals[sel].mean()),
                             1.0 / (rmid * math.log(ring.r_outer / ring.r_inner))))
        tables["density"] = (["r", "rho_mean", "rho_extremal"], rows)
    return Outcome(report, tables, EXIT_OK if est.converged else EXIT_HYPOTHESIS)


def cmd_verify(cfg: dict, rng) -> Outcome:
    f = _map(cfg)
    g = _geometry(cfg)
    tol = _tolerances(cfg)
    ring = _annulus(cfg, f.n)
    spec = cfg.get("rho", {})
    if spec.get("kind", "extremal") == "extremal":
        rho = analysis.extremal_radial_density(ring.r_inner, ring.r_outer)
    else:
        q = conditions.spherical_mean_function(analysis.angular_dilatation_field(f, ring.center), ring.center)
        rho = analysis.weighted_radial_density(q, f.n, ring.r_inner, ring.r_outer)
    if "scale" in spec:
        rho = rho.scaled(float(spec["scale"]))
    rep = analysis.verify_vaisala(f, ring, rho, rays=int(g.get("rays", 256)),
                                  resolution=int(g.get("resolution", 512)), m=int(cfg.get("m", 1)),
                                  tolerance=tol["inequality"], vertices=int(g.get("vertices", 129)),
                                  budget=int(tol["budget"]))
    ok = rep.holds and rep.lhs_converged and rep.rhs_reliable
    return Outcome(rep.to_dict(), {}, EXIT_OK if ok else EXIT_HYPOTHESIS)


def _classify_params(cfg: dict, seed: int) -> analysis.ClassifyParams:
    eps0, eps = _eps(cfg)
    tol = _tolerances(cfg)
    c = cfg.get("classify", {})
    return analysis.ClassifyParams(eps0=eps0, epsilons=tuple(eps), seed=seed, slope_tol=tol["slope"],
                                   tolerance=tol["stability"], **c)


def cmd_classify(cfg: dict, rng, seed: int) -> Outcome:
    f = _map(cfg, need_jacobian=False)
    n = f.n
    b = np.asarray(_geometry(cfg).get("center", f.b if isinstance(f, SampledMap) and f.b is not None else [0.0] * n),
                   dtype=float)
    Q, desc = _Q(cfg, b, f)
    route = cfg.get("route", analysis.Route.FMO_ROUTE.value)
    rep = analysis.classify_singularity(f, b, Q, route, _classify_params(cfg, seed), desc)
    rows = list(zip(rep.epsilons, rep.growth))
    tables = {"growth": (["eps", "max_abs_f"], rows)}
    if rep.distortion is not None:
        tables["distortion"] = (["eps", "bound"], list(zip(rep.epsilons, rep.distortion)))
    d = rep.to_dict()
    d["beta_consistent"] = rep.beta_consistent()
    status = EXIT_OK if rep.verdict is not analysis.Classification.INCONCLUSIVE else EXIT_HYPOTHESIS
    return Outcome(d, tables, status)


def cmd_fmo(cfg: dict, rng) -> Outcome:
    n = int(_geometry(cfg).get("n", len(_geometry(cfg).get("center", [0, 0]))))
    x0 = _center(cfg, n)
    f = _map(cfg) if "map" in cfg else None
    if f is not None and f.n != n:
        raise ConfigError("map and geometry dimensions differ", "geometry.n")
    Q, desc = _Q(cfg, x0, f)
    _, eps = _eps(cfg)
    v = conditions.fmo_test(Q, x0, eps, slope_tol=_tolerances(cfg)["slope"])
    d = {"Q": desc, **v.to_dict()}
    rows = list(zip(v.epsilons, v.ball_means, v.oscillations))
    status = EXIT_OK if v.verdict is conditions.Verdict.IN_FMO else EXIT_HYPOTHESIS
    return Outcome(d, {"oscillation": (["eps", "ball_mean", "oscillation"], rows)}, status)


def cmd_conditions(cfg: dict, rng) -> Outcome:
    n = int(_geometry(cfg).get("n", len(_geometry(cfg).get("center", [0, 0]))))
    b = _center(cfg, n)
    f = _map(cfg) if "map" in cfg else None
    Q, desc = _Q(cfg, b, f)
    eps0, eps = _eps(cfg)
    tol = _tolerances(cfg)
    radii = np.concatenate([[eps0], eps])
    profile = conditions.radial_profile(Q, b, radii)
    q = conditions.spherical_mean_function(Q, b)
    div = conditions.divergence_integrals(q, n, eps, eps0, tol["slope"])
    ll = conditions.loglog_growth_test(Q, b, eps, eps0, tolerance=tol["stability"], slope_tol=tol["slope"])
    report = {"Q": desc, "b": b, "divergence": div.to_dict(), "loglog": ll.to_dict(),
              "profile": {"radii": profile.radii, "values": profile.values}}
    tables = {
        "profile": (["r", "q"], list(zip(profile.radii, profile.values))),
        "integrals": (["eps", "I", "W", "ratio"], list(zip(eps, div.integrals, ll.integrals, ll.ratios))),
    }
    ok = div.verdict is conditions.Divergence.DIVERGES and ll.verdict is conditions.Growth.PASSES
    return Outcome(report, tables, EXIT_OK if ok else EXIT_HYPOTHESIS)


def execute(cfg: dict, seed: int) -> Outcome:
    rng = np.random.default_rng(seed)
    cmd = cfg["command"]
    if cmd == "dilatation-field":
        return cmd_dilatation_field(cfg, rng)
    if cmd == "modulus":
        return cmd_modulus(cfg, rng)
    if cmd == "verify-inequality":
        return cmd_verify(cfg, rng)
    if cmd == "classify":
        return cmd_classify(cfg, rng, seed)
    if cmd == "fmo-test":
        return cmd_fmo(cfg, rng)
    return cmd_conditions(cfg, rng)


def run(cfg: dict, out_dir: Path, seed: int | None = None) -> int:
    """Execute a validated config and write ``<stem>.json`` plus CSV tables into out_dir."""
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    cfg = {**cfg, "seed": seed}
    out = execute(cfg, seed)
    stem = cfg.get("output", {}).get("stem", cfg["command"])
    write_csv = cfg.get("output", {}).get("csv", True)
    doc = {
        "command": cfg["command"], "config_sha256": config_hash(cfg), "seed": seed,
        "tolerances": _tolerances(cfg), "exit_status": out.status, "report": out.report,
        "tables": sorted(out.tables) if write_csv else [],
    }
    out_dir = Path(out_dir)
    if write_csv:
        for name, (header, rows) in sorted(out.tables.items()):
            atomic_write(out_dir / f"{stem}_{name}.csv", csv_text(header, rows))
    atomic_write(out_dir / f"{stem}.json", dumps(doc) + "\n")
    return out.status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcmod", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the command in the config")
    p.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for JSON and CSV output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command is not None:
            cfg["command"] = args.command
        return run(cfg, args.out_dir, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except QCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
