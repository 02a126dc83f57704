import json
import math

import numpy as np
import pytest
import yaml

from qcmod.cli import ConfigError, dumps, ingest_samples, main, validate_config
from qcmod.mapping import catalog

CONFIGS = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def run_cli(tmp_path, cfg, *extra, out="out"):
    p = write_cfg(tmp_path, cfg)
    code = main(["--config", str(p), "--out-dir", str(tmp_path / out), *extra])
    return code, tmp_path / out


def test_dumps_is_canonical():
    a = dumps({"b": 1.0, "a": [np.float64(0.1), np.inf, np.nan], "c": {"z": True, "y": None}})
    b = dumps({"c": {"y": None, "z": True}, "a": [0.1, float("inf"), float("nan")], "b": 1.0})
    assert a == b
    d = json.loads(a)
    assert d["a"] == [0.1, "inf", "nan"] and list(d) == ["a", "b", "c"]


def test_schema_error_names_field(tmp_path, capsys):
    code, _ = run_cli(tmp_path, {"command": "modulus", "geometry": {"rays": 4}})
    assert code == 1
    assert "geometry.rays" in capsys.readouterr().err
    with pytest.raises(ConfigError) as exc:
        validate_config({"command": "modulus", "bogus": 1})
    assert exc.value.path == "<root>"
    with pytest.raises(ConfigError) as exc:
        validate_config({"command": "modulus", "geometry": {"r_inner": 2.0, "r_outer": 1.0}})
    assert exc.value.path == "geometry.r_inner"


def test_missing_samples_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        validate_config({"command": "classify", "map": {"samples": "nope.txt"}}, tmp_path)
    assert exc.value.path == "map.samples"


def sample_file(tmp_path, f, name="s.txt", radii=np.geomspace(0.5, 1e-4, 40), angles=16, extra=""):
    t = 2 * np.pi * np.arange(angles) / angles
    X = (radii[:, None, None] * np.stack([np.cos(t), np.sin(t)], axis=1)[None]).reshape(-1, 2)
    F = f(X)
    lines = [f"# n=2 count={len(X)} b=0,0"] + [" ".join(f"{v:.17g}" for v in [*x, *y]) for x, y in zip(X, F)]
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n" + extra)
    return p, radii, F


def test_ingest_identity_envelope(tmp_path):
    p, radii, _ = sample_file(tmp_path, catalog("identity"))
    r, m = ingest_samples(p).envelope()
    assert np.allclose(r, np.sort(radii), rtol=1e-12)
    assert np.allclose(m, r, rtol=1e-12)


def test_ingest_radial_exp_envelope(tmp_path):
    f = catalog("radial_exp", beta=0.5)
    p, radii, _ = sample_file(tmp_path, f)
    r, m = ingest_samples(p).envelope()
    assert np.allclose(m, np.exp(2 * (1 - r ** -0.5)), rtol=1e-6)


def test_ingest_errors_name_the_row(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# n=2 count=2\n0.1 0.2 0.3 0.4\n0.1 0.2 0.3\n")
    with pytest.raises(ConfigError, match="row 3"):
        ingest_samples(p)
    p.write_text("# n=2 count=1\n0.1 0.2 nan 0.4\n")
    with pytest.raises(ConfigError, match="row 2"):
        ingest_samples(p)
    p.write_text("# n=2 count=3\n0.1 0.2 0.3 0.4\n")
    with pytest.raises(ConfigError, match="declares 3"):
        ingest_samples(p)
    p.write_text("0.1 0.2 0.3 0.4\n")
    with pytest.raises(ConfigError, match="header"):
        ingest_samples(p)


def test_sampled_map_classify(tmp_path):
    f = catalog("radial_exp", beta=0.5)
    p, _, _ = sample_file(tmp_path, f, radii=np.geomspace(0.06, 4e-6, 120))
    cfg = {"command": "classify", "map": {"samples": p.name}, "Q": {"kind": "power", "exponent": 0.5},
           "route": "DIVERGENCE_ROUTE"}
    write_cfg(tmp_path, cfg)
    code = main(["--config", str(tmp_path / "cfg.yaml"), "--out-dir", str(tmp_path / "o")])
    doc = json.loads((tmp_path / "o" / "classify.json").read_text())
    # no derivatives: the domination check is skipped and recorded as such
    assert code == 0
    assert doc["report"]["verdict"] == "REMOVABLE"
    assert "skipped" in doc["report"]["hypotheses"]["domination"]


def test_derivative_command_rejects_samples(tmp_path, capsys):
    p, _, _ = sample_file(tmp_path, catalog("identity"))
    code, _ = run_cli(tmp_path, {"command": "dilatation-field", "map": {"samples": str(p)}})
    assert code == 1 and "map.samples" in capsys.readouterr().err


def test_empty_curve_family(tmp_path):
    code, out = run_cli(tmp_path, {"command": "modulus", "geometry": {"n": 2, "curves": []}})
    doc = json.loads((out / "modulus.json").read_text())
    assert code == 0 and doc["report"]["estimate"]["value"] == 0.0


def test_explicit_curves(tmp_path):
    curves = [[[-0.9, y], [0.9, y]] for y in np.linspace(-0.5, 0.5, 5).tolist()]
    code, out = run_cli(tmp_path, {"command": "modulus", "geometry": {"n": 2, "curves": curves, "resolution": 32}})
    doc = json.loads((out / "modulus.json").read_text())
    assert code == 0 and doc["report"]["estimate"]["value"] > 0


def test_ring_modulus_tables(tmp_path):
    cfg = {"command": "modulus", "geometry": {"n": 2, "r_inner": 1.0, "r_outer": math.e, "resolution": 128,
                                              "rays": 64}}
    code, out = run_cli(tmp_path, cfg)
    doc = json.loads((out / "modulus.json").read_text())
    assert code == 0
    assert abs(doc["report"]["relative_error"]) < 0.03
    assert (out / "modulus_density.csv").read_text().startswith("r,rho_mean,rho_extremal\n")


@pytest.mark.parametrize("name,code", [("classify_inversion", 2), ("fmo_power", 2), ("classify_radial_exp", 0),
                                       ("conditions_constant", 0), ("dilatation_ktau", 0)])
def test_shipped_configs(tmp_path, name, code):
    assert main(["--config", str(CONFIGS / f"{name}.yaml"), "--out-dir", str(tmp_path)]) == code


def test_command_override_and_unknown_map(tmp_path, capsys):
    cfg = {"command": "fmo-test", "map": {"name": "nosuch"}, "Q": {"kind": "constant"}}
    code, _ = run_cli(tmp_path, cfg)
    assert code == 1 and "nosuch" in capsys.readouterr().err


def test_seed_override_changes_only_seeded_output(tmp_path):
    cfg = {"command": "dilatation-field", "map": {"name": "beltrami_k_tau"},
           "geometry": {"radii": [0.2, 0.4], "angles": 3, "random_points": 20}}
    run_cli(tmp_path, cfg, "--seed", "1", out="a")
    run_cli(tmp_path, cfg, "--seed", "2", out="b")
    a = (tmp_path / "a" / "dilatation-field_field.csv").read_text()
    b = (tmp_path / "b" / "dilatation-field_field.csv").read_text()
    assert a != b
    assert a.splitlines()[:7] == b.splitlines()[:7]
