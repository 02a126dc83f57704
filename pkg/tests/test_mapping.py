import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcmod.core import DomainError
from qcmod.mapping import (
    CATALOG, BeltramiSpec, CatalogError, DivergenceError, JacobianMatrix, JacobianStrategy, beltrami_coefficient,
    beltrami_map, catalog, central_difference_jacobians, complex_derivatives, difference_quotient,
    directional_derivative, jacobian, k_beta, k_tau, linear_map,
)


def _domain_points(f, rng, count, r_lo=0.05, r_hi=0.95):
    u = rng.standard_normal((count, f.n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), count))[:, None] * u


def test_identity_jacobian():
    J = jacobian(catalog("identity"), [0.3, -0.7])
    assert np.allclose(J.matrix, np.eye(2))
    assert J.det == pytest.approx(1.0)


def test_linear_jacobian():
    J = jacobian(linear_map(np.diag([2.0, 3.0])), [5.0, 1.0])
    assert np.allclose(J.matrix, np.diag([2.0, 3.0]))
    assert J.det == pytest.approx(6.0)


def test_det_is_product_of_singular_values(rng):
    for _ in range(50):
        J = JacobianMatrix.from_matrix(rng.standard_normal((3, 3)))
        assert abs(J.det) == pytest.approx(np.prod(J.singular_values), rel=1e-9)


def test_zero_jacobian_is_degenerate_not_error():
    J = JacobianMatrix.from_matrix(np.zeros((2, 2)))
    assert J.is_zero and J.degenerate


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_closed_form_matches_central_differences(name, rng):
    f = catalog(name) if name != "linear" else catalog("linear", A=[[1.0, 2.0], [0.5, 3.0]])
    if f.jac is None:
        pytest.skip("no closed form")
    X = _domain_points(f, rng, 1000, 0.1, 0.9)
    A = f.jacobians(X)
    B = central_difference_jacobians(f, X)
    scale = np.linalg.norm(A, axis=(1, 2))
    err = np.linalg.norm(A - B, axis=(1, 2)) / scale
    assert err.max() < 1e-4


def test_ktau_jacobian_at_half():
    f = catalog("beltrami_k_tau")
    x = np.array([[0.5, 0.0], [0.0, 0.5], [0.3, 0.4]])
    assert np.allclose(f.jacobians(x), central_difference_jacobians(f, x), rtol=1e-4, atol=1e-8)


def test_directional_derivative():
    assert np.allclose(directional_derivative(catalog("identity"), [1.0, 2.0], [0.6, 0.8]), [0.6, 0.8])
    d = directional_derivative(linear_map(np.diag([2.0, 3.0])), [1.0, 1.0], [1.0, 0.0])
    assert np.allclose(d, [2.0, 0.0])
    with pytest.raises(Exception):
        directional_derivative(catalog("identity"), [1.0, 2.0], [1.0, 1.0])


def test_directional_derivative_vs_quotient():
    f = catalog("beltrami_k_tau")
    x = np.array([0.5, 0.0])
    h = np.array([1.0, 0.0])
    dd = directional_derivative(f, x, h)
    dq = difference_quotient(f, x, h, 1e-7)
    assert np.allclose(dd, dq, rtol=1e-4, atol=1e-10)


@given(x=st.floats(0.1, 0.9), y=st.floats(-0.9, 0.9), t=st.floats(0, 2 * math.pi))
def test_directional_derivative_is_jacobian_product(x, y, t):
    f = catalog("beltrami_k_tau")
    p = np.array([x, y]) * min(1.0, 0.9 / math.hypot(x, y))
    h = np.array([math.cos(t), math.sin(t)])
    assert np.allclose(directional_derivative(f, p, h), jacobian(f, p).matrix @ h, rtol=1e-9, atol=1e-14)


def test_complex_derivatives_of_conjugation():
    fz, fzb = complex_derivatives(np.diag([1.0, -1.0]))
    assert fz == 0 and fzb == 1


def test_beltrami_mu_recovered():
    f = catalog("beltrami_k_tau")
    z = np.array([0.3 + 0.4j, -0.2 + 0.1j, 0.7j])
    X = np.stack([z.real, z.imag], axis=1)
    mu = beltrami_coefficient(f.jacobians(X))
    expected = np.abs(z) * z / np.conj(z)
    assert np.allclose(mu, expected, atol=1e-12)


def test_zero_k_is_identity(rng):
    f = beltrami_map(BeltramiSpec(lambda t: 0.0, "zero"), base_radius=1.0)
    X = rng.uniform(-3, 3, (200, 2))
    X = X[np.linalg.norm(X, axis=1) > 1e-3]
    assert np.allclose(f(X), X, rtol=1e-12)
    assert np.allclose(np.linalg.norm(f(X), axis=1), np.linalg.norm(X, axis=1))
    assert np.abs(beltrami_coefficient(f.jacobians(X))).max() < 1e-6


def test_k_beta_matches_radial_exp(rng):
    g = catalog("beltrami_k_beta", beta=0.5)
    f = catalog("radial_exp", beta=0.5)
    X = _domain_points(f, rng, 200)
    assert np.allclose(g(X), f(X), rtol=1e-10, atol=0)


def test_radial_exp_value():
    f = catalog("radial_exp", beta=0.5)
    assert np.linalg.norm(f([[0.01, 0.0]])) == pytest.approx(math.exp(-18), rel=1e-12)


def test_inversion_value():
    assert np.linalg.norm(catalog("inversion")([[2.0, 0.0]])) == pytest.approx(0.5)


def test_divergence_error_names_radius():
    f = beltrami_map(BeltramiSpec(k_tau, "tau"), base_radius=0.5, r_max=np.inf)
    with pytest.raises(DivergenceError) as exc:
        f([[1.5, 0.0]])
    assert exc.value.radius == pytest.approx(1.0, abs=1e-6)


def test_domain_error_reports_point():
    f = catalog("beltrami_k_tau")
    with pytest.raises(DomainError):
        f([[0.5, 0.0], [2.0, 0.0]])
    with pytest.raises(DomainError):
        catalog("inversion")([[0.0, 0.0]])


def test_unknown_catalog_name():
    with pytest.raises(CatalogError):
        catalog("nope")


def test_k_profiles():
    assert k_tau(0.3) == 0.3
    k = k_beta(0.5)
    r = 0.25
    assert (1 + k(r)) / (1 - k(r)) == pytest.approx(r ** -0.5)


def test_scaled_keeps_jacobian_ratio(rng):
    f = catalog("beltrami_k_tau")
    X = _domain_points(f, rng, 20)
    assert np.allclose(f.scaled(3.0).jacobians(X), 3.0 * f.jacobians(X))


def test_strategy_switch(rng):
    f = catalog("radial_exp")
    g = f.with_strategy(JacobianStrategy.CENTRAL_DIFFERENCE)
    X = _domain_points(f, rng, 20, 0.2, 0.9)
    assert np.allclose(f.jacobians(X), g.jacobians(X), rtol=1e-5)
