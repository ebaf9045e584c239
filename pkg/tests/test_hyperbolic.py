import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdyamabe.errors import DomainError, ParameterError, PreconditionError
from bdyamabe.hyperbolic import (GeodesicBallSpec, ball_to_hyperboloid, conormal, coordinate_eigenfunction_residual,
                                 discrete_ball_eigenproblem, hyperboloid_isometry_audit, map_F, map_F_kappa,
                                 minkowski, pullback_audit, r_kappa, sample_ball)

from conftest import boundary_points, half_space_points

kappas = st.floats(0.02, 0.95)


@pytest.mark.parametrize("kappa", [0.05, 0.25, 0.5, 0.9])
@pytest.mark.parametrize("n", [3, 4])
def test_pullback_is_conformal_bubble_metric(kappa, n, rng):
    rep = pullback_audit(kappa, half_space_points(rng, 50, n))
    assert rep.passed and rep.computed["max_rel_error"] < 1e-8


@given(n=st.sampled_from([3, 4, 5]), seed=st.integers(0, 1000))
def test_inversion_is_an_involution(n, seed):
    y = half_space_points(np.random.default_rng(seed), 20, n)
    assert np.allclose(map_F(map_F(y)), y, atol=1e-10 * (1 + np.abs(y).max()) ** 2)


def test_half_space_maps_into_ball(rng):
    xi = map_F(half_space_points(rng, 200, 3))
    e = np.array([0, 0, 0.5])
    assert np.all(np.linalg.norm(xi + e, axis=1) <= 0.5 + 1e-12)
    xb = map_F(boundary_points(rng, 50, 3))
    assert np.allclose(np.linalg.norm(xb + e, axis=1), 0.5)


def test_inversion_domain():
    with pytest.raises(DomainError):
        map_F(np.array([[0.0, 0.0, -1.0]]))


@given(kappa=kappas)
def test_hyperboloid_isometry(kappa):
    rng = np.random.default_rng(0)
    xi = map_F(half_space_points(rng, 40, 3))
    rep = hyperboloid_isometry_audit(kappa, xi)
    assert rep.passed, rep.computed


@given(kappa=kappas)
def test_image_is_the_coth_geodesic_ball(kappa):
    rng = np.random.default_rng(1)
    spec = GeodesicBallSpec(kappa, "auto", 3)
    top = spec.r * math.cosh(spec.t0)
    z = map_F_kappa(kappa, half_space_points(rng, 100, 3))
    assert np.all(z[:, 0] < top * (1 + 1e-12))
    zb = map_F_kappa(kappa, boundary_points(rng, 50, 3))
    assert np.allclose(zb[:, 0], top, rtol=1e-11)
    assert np.allclose(minkowski(zb, zb), -spec.r**2, rtol=1e-11)


def test_coth_rule_identity():
    for kappa in (0.05, 0.25, 0.5, 0.9):
        spec = GeodesicBallSpec(kappa)
        assert 1 / math.tanh(spec.t0) == pytest.approx(2 * spec.r, rel=1e-14)
        assert spec.robin_coefficient == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("kappa", [0.05, 0.25, 0.5, 0.9])
def test_coordinate_functions_are_eigenfunctions(kappa, rng):
    spec = GeodesicBallSpec(kappa)
    zi, zb = sample_ball(spec, 100, rng), sample_ball(spec, 100, rng, boundary=True)
    for a in (1, 2, 3):
        ri, rb = coordinate_eigenfunction_residual(spec, a, zi, zb)
        assert ri.max() < 1e-9 and rb.max() < 1e-9


def test_cosh_rule_fails_boundary(rng):
    spec = GeodesicBallSpec(0.25, "cosh")
    zi, zb = sample_ball(spec, 50, rng), sample_ball(spec, 50, rng, boundary=True)
    _, rb = coordinate_eigenfunction_residual(spec, 1, zi, zb, boundary_coefficient=2.0)
    assert rb.max() > 1e-3


def test_z0_and_quadratic_controls(rng):
    spec = GeodesicBallSpec(0.25)
    zi, zb = sample_ball(spec, 50, rng), sample_ball(spec, 50, rng, boundary=True)
    ri, rb = coordinate_eigenfunction_residual(spec, 0, zi, zb)
    assert ri.max() < 1e-9 and rb.max() > 1e-2  # z_0 fails only the boundary condition
    ri, _ = coordinate_eigenfunction_residual(spec, (1, 2), zi, zb)
    assert ri.max() > 1e-2


def test_conormal_precondition():
    spec = GeodesicBallSpec(0.5)
    with pytest.raises(PreconditionError):
        conormal(spec, np.array([[spec.r, 0.0, 0.0, 0.0]]))


def test_parameter_errors():
    with pytest.raises(ParameterError):
        r_kappa(0.0)
    with pytest.raises(ParameterError):
        GeodesicBallSpec(0.5, "sinh")
    with pytest.raises(DomainError):
        ball_to_hyperboloid(0.5, np.array([[0.0, 0.0, 2.0]]))


@pytest.mark.parametrize("kappa", [0.25, 0.75])
def test_discrete_ball_kernel(kappa):
    census, defect = discrete_ball_eigenproblem(GeodesicBallSpec(kappa))
    assert defect < 1e-12
    assert census.count == 3 and census.max_kernel_fit() < 5e-2
    census, defect = discrete_ball_eigenproblem(GeodesicBallSpec(kappa, "cosh"))
    assert defect > 1e-3 and census.count != 3
