import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcmod.analysis import (
    Classification, ClassifyParams, Route, beta_constant, check_domination, classify_singularity,
    distortion_bound, extremal_radial_density, verify_vaisala, weighted_radial_density,
)
from qcmod.core import Annulus, PreconditionError, sphere_area_constant
from qcmod.mapping import catalog, linear_map


def radius(X):
    return np.linalg.norm(np.atleast_2d(X), axis=1)


def sqrt_r(X):
    return radius(X) ** 0.5


def ones(X):
    return np.ones(len(np.atleast_2d(X)))


def test_beta_examples():
    assert beta_constant(2, 2 * math.pi, 1) == 1.0
    assert beta_constant(2, math.pi, 1) == pytest.approx(2.0)
    for n in range(2, 9):
        A = 1.7
        assert beta_constant(n, A, 1.0) == pytest.approx((sphere_area_constant(n) / A) ** (1 / (n - 1)), rel=1e-15)
    with pytest.raises(PreconditionError):
        beta_constant(2, 0, 1)
    with pytest.raises(PreconditionError):
        beta_constant(2, 1, -1)


@given(n=st.integers(2, 8), A=st.floats(0.01, 100), M=st.floats(0.01, 100), f=st.floats(1.01, 10))
def test_beta_decreasing(n, A, M, f):
    b = beta_constant(n, A, M)
    assert beta_constant(n, A * f, M) < b
    assert beta_constant(n, A, M * f) < b


def test_distortion_bound_examples():
    assert distortion_bound(0.0, 2.0, 1.0, 1.0, 1.0) == pytest.approx(5.0)
    assert distortion_bound(math.log(10), 2.0) == pytest.approx(0.5)
    I = np.linspace(0, 50, 20)
    b = distortion_bound(I, 1.0)
    assert np.all(np.diff(b) < 0)
    with pytest.raises(PreconditionError):
        distortion_bound(1.0, 0.0)


def test_density_side_condition():
    rho = extremal_radial_density(0.2, 0.8)
    assert rho.line_integral(0.2, 0.8) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(PreconditionError):
        verify_vaisala(catalog("identity"), Annulus([0, 0], 0.2, 0.8), rho.scaled(0.5), rays=16, resolution=32)


def test_identity_equality_case_unit_to_e():
    rep = verify_vaisala(catalog("identity"), Annulus([0, 0], 1.0, math.e), rays=128, resolution=256)
    assert rep.rhs == pytest.approx(2 * math.pi, rel=1e-9)
    assert rep.lhs == pytest.approx(2 * math.pi, rel=0.03)
    assert rep.lhs_analytic == pytest.approx(2 * math.pi, rel=1e-9)
    assert abs(rep.margin) < 0.03 * rep.rhs


def test_ktau_inequality_and_weighted_density():
    f = catalog("beltrami_k_tau")
    A = Annulus([0, 0], 0.2, 0.8)
    rep = verify_vaisala(f, A, rays=128, resolution=256)
    assert rep.holds and rep.rhs_reliable
    assert rep.lhs_analytic == pytest.approx(2 * math.pi / (3 * math.log(4)), rel=1e-8)
    assert rep.rhs == pytest.approx(2 * math.pi * (math.log(4) - 2 * math.log(1.5)) / math.log(4) ** 2, rel=1e-8)
    # the weighted density is extremal for this radial map: rhs equals the image ring modulus
    rho = weighted_radial_density(lambda t: (1 - t) / (1 + t), 2, 0.2, 0.8)
    tight = verify_vaisala(f, A, rho, rays=128, resolution=256)
    assert tight.rhs == pytest.approx(rep.lhs_analytic, rel=1e-8)
    assert tight.lhs <= tight.rhs * 1.05


def test_linear_map_inequality():
    f = linear_map([[2.0, 0.5], [0.0, 1.0]])
    rep = verify_vaisala(f, Annulus([0, 0], 0.5, 1.0), rays=128, resolution=256)
    assert rep.lhs_analytic is None
    assert rep.holds


def test_multiplicity_divides_rhs():
    rep = verify_vaisala(catalog("identity"), Annulus([0, 0], 0.3, 0.9), rays=32, resolution=64, m=2)
    assert rep.margin == pytest.approx(rep.rhs / 2 - rep.lhs)
    with pytest.raises(PreconditionError):
        verify_vaisala(catalog("identity"), Annulus([0, 0], 0.3, 0.9), m=0)


def test_domination_detects_violation():
    f = catalog("beltrami_k_tau")
    ok = check_domination(f, [0, 0], lambda X: (1 - radius(X)) / (1 + radius(X)), 1e-3, 0.5)
    assert ok["ok"] and ok["checked"] >= 1000
    bad = check_domination(f, [0, 0], lambda X: 0.5 * ones(X), 1e-3, 0.5)
    assert not bad["ok"]


def test_radial_exp_divergence_route():
    rep = classify_singularity(catalog("radial_exp", beta=0.5), [0, 0], sqrt_r, Route.DIVERGENCE_ROUTE)
    assert rep.verdict is Classification.REMOVABLE
    assert rep.beta_n == 1.0 and rep.beta_consistent()
    eps = rep.epsilons
    assert np.allclose(rep.hypotheses["divergence"]["integrals"], 2 * (eps ** -0.5 - 0.5 ** -0.5), rtol=1e-6)


def test_radial_exp_fmo_route():
    rep = classify_singularity(catalog("radial_exp", beta=0.5), [0, 0], sqrt_r, Route.FMO_ROUTE)
    assert rep.verdict is Classification.REMOVABLE
    assert rep.beta_consistent()


def test_inversion_is_inconclusive():
    rep = classify_singularity(catalog("inversion"), [0, 0], ones, Route.FMO_ROUTE)
    assert rep.verdict is Classification.INCONCLUSIVE
    assert rep.failed_hypothesis == "weak_growth"
    rep = classify_singularity(catalog("inversion"), [0, 0], ones, Route.FMO_ROUTE,
                               ClassifyParams(C=1.0, p=3.0))
    assert rep.failed_hypothesis == "weak_growth"


def test_domination_failure_blocks_verdict():
    rep = classify_singularity(catalog("radial_exp", beta=0.5), [0, 0], lambda X: 0.5 * sqrt_r(X),
                               Route.DIVERGENCE_ROUTE)
    assert rep.verdict is Classification.INCONCLUSIVE
    assert rep.failed_hypothesis == "domination"


def test_ktau_fmo_route():
    f = catalog("beltrami_k_tau")
    Q = lambda X: (1 - radius(X)) / (1 + radius(X))  # noqa: E731
    rep = classify_singularity(f, [0, 0], Q, Route.FMO_ROUTE)
    assert rep.hypotheses["fmo"]["verdict"] == "IN_FMO"
    assert rep.verdict is Classification.REMOVABLE


def test_enlarging_Q_never_downgrades_removable():
    f = catalog("radial_exp", beta=0.5)
    r1 = classify_singularity(f, [0, 0], sqrt_r, Route.DIVERGENCE_ROUTE)
    r2 = classify_singularity(f, [0, 0], lambda X: 2 * sqrt_r(X), Route.DIVERGENCE_ROUTE)
    assert np.array_equal(r1.growth, r2.growth)
    assert not (r1.verdict is Classification.REMOVABLE and r2.verdict is Classification.POLE_OR_REMOVABLE)


def test_lemma_route_with_log_weights():
    # phi = log(1/t), psi = 1/(t log(1/t)): the log-log specialisation with M = 1.
    # I grows like log log(1/eps), so the radii must reach far down to see divergence.
    f = catalog("beltrami_k_tau")
    Q = lambda X: (1 - radius(X)) / (1 + radius(X))  # noqa: E731
    P = ClassifyParams(epsilons=np.geomspace(0.05, 1e-12, 12), phi=lambda t: math.log(1 / t),
                       psi=lambda t: 1 / (t * math.log(1 / t)))
    rep = classify_singularity(f, [0, 0], Q, Route.LEMMA_ROUTE, P)
    assert rep.hypotheses["I_divergence"]["verdict"] == "DIVERGES"
    # I / log phi = 1 - log log 2 / log log(1/eps) is largest at the first radius
    assert rep.M == pytest.approx(1 - math.log(math.log(2)) / math.log(math.log(20)), rel=1e-6)
    assert rep.verdict is Classification.REMOVABLE
    assert rep.beta_consistent()
    with pytest.raises(PreconditionError):
        classify_singularity(f, [0, 0], Q, Route.LEMMA_ROUTE)


def test_report_serialises():
    rep = classify_singularity(catalog("radial_exp", beta=0.5), [0, 0], sqrt_r, "DIVERGENCE_ROUTE")
    d = rep.to_dict()
    assert d["verdict"] == "REMOVABLE" and d["route"] == "DIVERGENCE_ROUTE"
    assert d["distortion_bound"] is not None
