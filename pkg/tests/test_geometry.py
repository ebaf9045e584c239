import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdyamabe.errors import DomainError, PreconditionError, SingularMetricError
from bdyamabe.geometry import (MetricField, boundary_geometry, check_conformal_law, conformal_boundary_operator,
                               conformal_change, conformal_laplacian, euclidean_metric, fermi_expansion_audit,
                               fermi_synthetic_metric, metric_from_spec, polynomial_field, scalar_curvature,
                               warped_metric)
from bdyamabe.models import BubbleParams, bubble_field

from conftest import boundary_points, half_space_points


@pytest.mark.parametrize("n", [3, 4, 5])
def test_round_sphere_curvature(n, rng):
    g = metric_from_spec({"kind": "conformal", "n": n, "factor": {"type": "round_sphere"}})
    z = half_space_points(rng, 20, n)
    assert np.allclose(scalar_curvature(g, z), n * (n - 1), rtol=1e-10)


@pytest.mark.parametrize("n", [3, 4])
@pytest.mark.parametrize("kappa", [0.1, 0.5, 0.9])
def test_bubble_metric_constant_curvatures(n, kappa, rng):
    g = metric_from_spec({"kind": "conformal", "n": n, "factor": {"type": "bubble", "kappa": kappa, "eps": 0.7}})
    z = half_space_points(rng, 20, n)
    assert np.allclose(scalar_curvature(g, z), -4 * n * (n - 1) * kappa, rtol=1e-9)
    zb = boundary_points(rng, 20, n)
    assert np.allclose(boundary_geometry(g, zb).h, 2.0, rtol=1e-9)


def test_euclidean_is_flat(rng):
    z = half_space_points(rng, 10, 3)
    g = euclidean_metric(3)
    assert np.all(scalar_curvature(g, z) == 0)
    bg = boundary_geometry(g, boundary_points(rng, 10, 3))
    assert np.all(bg.h == 0) and np.allclose(bg.eta, [0, 0, 1])


def test_fermi_second_fundamental_form_at_origin():
    pi0 = np.array([[0.3, 0.1], [0.1, -0.2]])
    bg = boundary_geometry(fermi_synthetic_metric(pi0), np.zeros((1, 3)))
    assert np.allclose(bg.pi[0], pi0, atol=1e-14)
    assert bg.h[0] == pytest.approx(np.trace(pi0) / 2, abs=1e-14)


@given(a=st.floats(-0.5, 0.5), b=st.floats(-0.5, 0.5), c2=st.floats(0.0, 0.5))
def test_conformal_law_hypothesis(a, b, c2):
    rng = np.random.default_rng(0)
    g = fermi_synthetic_metric(np.array([[a, b], [b, -a]]))
    xi = polynomial_field(3, 1.0, None, c2 * np.eye(3))
    u = polynomial_field(3, 0.5, np.array([0.1, -0.2, 0.3]), 0.1 * np.eye(3))
    rep = check_conformal_law(g, xi, u, half_space_points(rng, 20, 3, 0.3), boundary_points(rng, 20, 3, 0.3),
                              tol=1e-9)
    assert rep.passed, rep.computed


def test_conformal_law_warped_and_bubble_factor(rng):
    g = warped_metric(3, 0.1, 0.05)
    xi = bubble_field(BubbleParams(0.4, 1.0, (), 3))
    u = polynomial_field(3, 1.0, np.array([0.2, 0.0, -0.1]))
    rep = check_conformal_law(g, xi, u, half_space_points(rng, 20, 3, 0.5), boundary_points(rng, 20, 3, 0.5),
                              tol=1e-8)
    assert rep.passed, rep.computed
    assert rep.anchor and rep.provenance == "exact"


def test_conformal_law_detects_wrong_exponent(rng):
    # u * xi instead of u / xi breaks the law
    g = euclidean_metric(3)
    xi = polynomial_field(3, 1.0, None, 0.3 * np.eye(3))
    u = polynomial_field(3, 1.0, np.array([0.2, 0.0, -0.1]))
    z = half_space_points(rng, 10, 3, 0.5)
    gt = conformal_change(g, xi)
    lhs = conformal_laplacian(gt, xi * u, z)
    rhs = xi.value(z) ** -5 * conformal_laplacian(g, u, z)
    assert np.max(np.abs(lhs - rhs)) > 1e-3


def test_finite_difference_metric_agrees_with_analytic(rng):
    pi0 = np.array([[0.2, 0.05], [0.05, -0.2]])
    ga = fermi_synthetic_metric(pi0)
    gf = MetricField(3, ga.g)
    assert gf.mode == "fd" and ga.mode == "analytic"
    z = half_space_points(rng, 10, 3, 0.5)
    assert np.allclose(scalar_curvature(gf, z), scalar_curvature(ga, z), atol=1e-5)


def test_fermi_expansion_audit_orders():
    pi0 = np.array([[0.3, 0.0], [0.0, -0.3]])
    rep = fermi_expansion_audit(fermi_synthetic_metric(pi0), pi0)
    assert rep.passed and rep.computed["order"] is None  # exactly linear
    quad = np.zeros((2, 2, 3, 3))
    quad[0, 0, 0, 0] = quad[1, 1, 1, 1] = 0.5
    rep = fermi_expansion_audit(fermi_synthetic_metric(pi0, quad), pi0)
    assert rep.passed and 1.9 <= rep.computed["order"] <= 2.1


def test_fermi_expansion_audit_rejects_non_fermi():
    g = metric_from_spec({"kind": "conformal", "n": 3, "factor": {"type": "quadratic", "c0": 1.0, "c2": 0.2}})
    with pytest.raises(PreconditionError):
        fermi_expansion_audit(g, np.zeros((2, 2)))
    g.fermi = True
    with pytest.raises(PreconditionError):
        fermi_expansion_audit(g, np.zeros((2, 2)))


def test_domain_errors():
    g = euclidean_metric(3)
    u = polynomial_field(3, 1.0)
    with pytest.raises(DomainError):
        conformal_boundary_operator(g, u, np.array([[0.0, 0.0, 0.1]]))
    with pytest.raises(DomainError):
        conformal_laplacian(g, u, np.array([[0.0, 0.0, -0.1]]))


def test_singular_metric():
    g = MetricField(3, lambda z: np.zeros(np.shape(z)[:-1] + (3, 3)))
    with pytest.raises(SingularMetricError):
        g.inverse(np.zeros((1, 3)))


def test_metric_from_spec_kinds():
    assert metric_from_spec({"kind": "euclidean", "n": 4}).n == 4
    assert metric_from_spec({"kind": "warped", "b1": 0.1}).n == 3
    assert metric_from_spec({"kind": "fermi_synthetic", "pi": [[0.1, 0], [0, -0.1]]}).fermi
    with pytest.raises(ValueError):
        metric_from_spec({"kind": "nope"})
