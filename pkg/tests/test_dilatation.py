import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from qcmod.dilatation import (
    DegeneracyError, angular_dilatation, angular_l, beltrami_angular_dilatation, beltrami_inner_dilatation,
    dilatation_arrays, dilatation_field, inner_dilatation, sampled_angular_l,
)
from qcmod.mapping import CATALOG, catalog, linear_map

D23 = np.diag([2.0, 3.0])
matrices = arrays(np.float64, (2, 2), elements=st.floats(-5, 5))


def test_inner_dilatation_examples():
    assert inner_dilatation(np.eye(2)) == pytest.approx(1.0)
    assert inner_dilatation(D23) == pytest.approx(1.5)
    assert inner_dilatation(np.zeros((2, 2))) == 1.0
    assert inner_dilatation(np.array([[1.0, 0.0], [0.0, 0.0]])) == math.inf


def test_angular_l_examples():
    assert angular_l(np.eye(2), [0.6, 0.8]) == pytest.approx(1.0)
    assert angular_l(D23, [1.0, 0.0]) == pytest.approx(2.0)
    assert angular_l(D23, [0.0, 1.0]) == pytest.approx(3.0)
    assert sampled_angular_l(D23, [1.0, 0.0]) == pytest.approx(2.0, rel=1e-3)
    assert sampled_angular_l(D23, [0.0, 1.0]) == pytest.approx(3.0, rel=1e-3)


def test_angular_dilatation_examples():
    assert angular_dilatation(np.eye(2), [1.0, 0.0]) == pytest.approx(1.0)
    assert angular_dilatation(D23, [0.0, 1.0]) == pytest.approx(2 / 3)
    assert angular_dilatation(D23, [1.0, 0.0]) == pytest.approx(1.5)
    assert angular_dilatation(np.zeros((2, 2)), [1.0, 0.0]) == 1.0
    assert angular_dilatation(np.array([[1.0, 1.0], [1.0, 1.0]]), [1.0, 0.0]) == math.inf


def test_beltrami_formulas():
    assert beltrami_angular_dilatation(0, 0.3 + 0.1j) == pytest.approx(1.0)
    z = 0.5
    assert beltrami_angular_dilatation(0.5 * z / np.conj(z), z) == pytest.approx(1 / 3)
    beta, r = 0.5, 0.3
    k = (1 - r ** beta) / (1 + r ** beta)
    z = r * np.exp(0.7j)
    assert beltrami_angular_dilatation(k * z / np.conj(z), z) == pytest.approx(r ** beta, rel=1e-12)
    assert beltrami_inner_dilatation(0) == 1.0
    assert beltrami_inner_dilatation(0.5) == pytest.approx(3.0)
    assert beltrami_inner_dilatation(k) == pytest.approx(r ** -beta)
    with pytest.raises(DegeneracyError):
        beltrami_inner_dilatation(1.0)
    with pytest.raises(DegeneracyError):
        beltrami_angular_dilatation(1.2, 0.5)


@given(A=matrices, t=st.floats(0, 2 * math.pi))
def test_closed_form_l_matches_sampling_2d(A, t):
    s = np.linalg.svd(A, compute_uv=False)
    assume(s[-1] > 1e-3 * max(s[0], 1e-300) and s[0] > 1e-6)
    u = np.array([math.cos(t), math.sin(t)])
    assert angular_l(A, u) == pytest.approx(sampled_angular_l(A, u), rel=1e-3)


def test_closed_form_l_matches_sampling_3d(rng):
    for _ in range(30):
        A = rng.standard_normal((3, 3))
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        assert angular_l(A, u) == pytest.approx(sampled_angular_l(A, u), rel=1e-3)


@given(A=matrices, t=st.floats(0, 2 * math.pi))
def test_l_above_minimal_stretch_and_ordering(A, t):
    s = np.linalg.svd(A, compute_uv=False)
    assume(s[-1] > 1e-6 * max(s[0], 1e-300))
    u = np.array([math.cos(t), math.sin(t)])
    assert angular_l(A, u) >= s[-1] * (1 - 1e-12)
    assert angular_dilatation(A, u) <= inner_dilatation(A) * (1 + 1e-9)


@given(c=st.floats(1e-3, 1e3), x=st.floats(0.1, 0.6), y=st.floats(0.1, 0.6))
def test_scale_invariance(c, x, y):
    f = catalog("beltrami_k_tau")
    X = np.array([[x, y]])
    a = dilatation_field(f, [0, 0], X)[0]
    b = dilatation_field(f.scaled(c), [0, 0], X)[0]
    assert b.K_I == pytest.approx(a.K_I, rel=1e-9)
    assert b.D_f == pytest.approx(a.D_f, rel=1e-9)


def test_vectorised_matches_scalar(rng):
    A = rng.standard_normal((200, 3, 3))
    U = rng.standard_normal((200, 3))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    out = dilatation_arrays(A, U)
    for i in range(0, 200, 17):
        assert out["D_f"][i] == pytest.approx(angular_dilatation(A[i], U[i]), rel=1e-10)
        assert out["K_I"][i] == pytest.approx(inner_dilatation(A[i]), rel=1e-10)


def test_extreme_scales_survive_normalisation():
    A = np.array([np.diag([2e-200, 3e-200]), np.diag([2e200, 3e200])])
    U = np.array([[0.0, 1.0], [0.0, 1.0]])
    out = dilatation_arrays(A, U)
    assert np.allclose(out["D_f"], 2 / 3)
    assert np.allclose(out["K_I"], 1.5)


def test_identity_field():
    pts = np.random.default_rng(0).uniform(-1, 1, (100, 2))
    for s in dilatation_field(catalog("identity"), [3.0, 3.0], pts):
        assert s.K_I == pytest.approx(1.0) and s.D_f == pytest.approx(1.0)


def test_ktau_field_profile():
    f = catalog("beltrami_k_tau")
    r = np.arange(1, 10) / 10
    X = np.stack([r * math.cos(0.3), r * math.sin(0.3)], axis=1)
    out = dilatation_field(f, [0, 0], X)
    assert np.allclose([s.D_f for s in out], (1 - r) / (1 + r), atol=1e-6)
    assert np.allclose([s.D_f_beltrami for s in out], (1 - r) / (1 + r), atol=1e-6)
    assert all(s.cross_check_ok for s in out)


@pytest.mark.parametrize("name", ["beltrami_k_tau", "beltrami_k_beta", "radial_exp", "identity"])
def test_beltrami_path_agrees_on_random_samples(name, rng):
    f = catalog(name)
    u = rng.standard_normal((500, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = rng.uniform(0.05, 0.95, 500)[:, None] * u
    x0 = rng.uniform(-0.02, 0.02, 2)
    out = dilatation_field(f, x0, X)
    for s in out:
        if s.mu is not None and abs(s.mu) <= 0.99:
            assert s.D_f_beltrami == pytest.approx(s.D_f, rel=1e-9)


def test_field_rejects_base_point_and_domain():
    f = catalog("beltrami_k_tau")
    with pytest.raises(Exception, match="sample 1"):
        dilatation_field(f, [0.2, 0.0], [[0.3, 0.0], [0.2, 0.0]])
    with pytest.raises(Exception):
        dilatation_field(f, [0.0, 0.0], [[0.3, 0.0], [1.5, 0.0]])


def test_chunked_threads_preserve_order(monkeypatch, rng):
    monkeypatch.setenv("QCMOD_THREADS", "3")
    f = linear_map(D23)
    X = rng.uniform(-1, 1, (1000, 2))
    out = dilatation_field(f, [5.0, 5.0], X, chunk=97)
    assert np.allclose([s.x for s in out], X)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_ordering_on_catalog(name, rng):
    f = catalog(name) if name != "linear" else catalog("linear", A=[[1.0, 2.0], [0.0, 3.0]])
    u = rng.standard_normal((500, 2))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = rng.uniform(0.05, 0.95, 500)[:, None] * u
    F = dilatation_arrays(f.jacobians(X), u)
    assert np.all(F["D_f"] <= F["K_I"] * (1 + 1e-9))
