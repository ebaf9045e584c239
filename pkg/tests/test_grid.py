import numpy as np
import pytest

from bdyamabe.errors import FitError, ParameterError
from bdyamabe.geometry import fermi_synthetic_metric
from bdyamabe.grid import (Dirichlet, Neumann, Robin, RobinProblem, SphericalGrid, assemble, ball_grid,
                           grid_derivatives, half_ball_grid, near_null_space, quadratic_origin_fit, solve)
from bdyamabe.linear import mode_preconditioner

K = np.array([0.3, -0.2, 0.5])
LAM = float(K @ K)


def exact(y):
    return np.exp(y @ K)


def mms_problem(metric=None):
    return RobinProblem(c=-1.0, f=lambda y: (LAM - 1.0) * exact(y),
                        flat=Robin(1.0, lambda y: -K[2] * exact(y) - exact(y)),
                        outer=Dirichlet(exact), metric=metric)


def mms_error(n):
    g = half_ball_grid(1.0, n, n, 2 * n)
    u = solve(assemble(mms_problem(), g))
    return np.max(np.abs(u - exact(g.centers())))


def test_manufactured_solution_second_order():
    e1, e2 = mms_error(8), mms_error(16)
    assert e2 < 2e-3
    assert np.log2(e1 / e2) > 1.7


def test_mode_system_matches_full_grid():
    g = half_ball_grid(2.0, 10, 8, 16)

    def f(y):
        r = np.linalg.norm(y, axis=-1)
        x1, x2 = y[..., 0], y[..., 1]
        return np.exp(-r**2) * (x1**2 - x2**2)  # pure cos(2 phi) in the azimuth

    prob = RobinProblem(c=lambda y: -1.0 - np.linalg.norm(y, axis=-1) ** 2, f=f, flat=Robin(0.5, 0.0),
                        outer=Dirichlet(0.0))
    full = solve(assemble(prob, g)).reshape(g.shape)
    R, T = np.meshgrid(g.rc, g.tc, indexing="ij")
    amp = f(g.to_cartesian(R.ravel(), T.ravel(), np.zeros(R.size)))  # the cos(2 phi) amplitude
    m2 = solve(assemble(prob, g, mode=2), amp).reshape(g.nr, g.nt)
    assert np.allclose(full, m2[:, :, None] * np.cos(2 * g.pc)[None, None, :], atol=1e-12 * np.abs(full).max())


def test_mode_preconditioner_is_exact_inverse():
    g = half_ball_grid(3.0, 8, 6, 12)
    prob = RobinProblem(c=lambda y: -np.exp(-np.linalg.norm(y, axis=-1)), flat=Robin(0.7, 0.0),
                        outer=Dirichlet(0.0))
    S = assemble(prob, g)
    M = mode_preconditioner(prob, g)
    x = np.random.default_rng(0).normal(size=g.size)
    assert np.allclose(M @ (S.A @ x), x, atol=1e-10)


def test_curved_metric_scheme_converges():
    # Laplace-Beltrami of a constant vanishes; check the scheme keeps constants with Neumann data
    g = half_ball_grid(1.0, 8, 8, 16)
    met = fermi_synthetic_metric(np.diag([0.2, -0.2]))
    S = assemble(RobinProblem(c=0.0, flat=Neumann(), outer=Dirichlet(1.0), metric=met.g), g)
    u = solve(S)
    assert np.allclose(u, 1.0, atol=1e-10)


def _derivative_errors(n):
    g = half_ball_grid(1.0, n, n, 2 * n)
    y = g.centers()
    u = y[:, 0] ** 2 + 2 * y[:, 1] * y[:, 2] + y[:, 2]
    grad, hess = grid_derivatives(g, u)
    ex = np.column_stack([2 * y[:, 0], 2 * y[:, 2], 2 * y[:, 1] + 1])
    r = np.linalg.norm(y, axis=1)
    sel = (r > 0.2) & (r < 0.9)
    return (np.max(np.linalg.norm(grad - ex, axis=1)[sel]),
            np.max(np.abs(hess[sel] - np.sqrt(12.0))))  # |H|_F of the quadratic


def test_grid_derivatives_converge():
    (g1, h1), (g2, h2) = _derivative_errors(12), _derivative_errors(24)
    assert g2 < 2e-2 and np.log2(g1 / g2) > 1.7
    assert np.log2(h1 / h2) > 1.7


def test_quadratic_origin_fit_exact():
    g = half_ball_grid(1.0, 16, 8, 16)
    y = g.centers()
    u = 1.5 + 0.3 * y[:, 0] - 0.7 * y[:, 1] + 0.2 * y[:, 2] + y[:, 0] * y[:, 2] - 2 * y[:, 1] ** 2
    W = quadratic_origin_fit(g, 0.5)
    assert np.allclose(W @ u, [1.5, 0.3, -0.7, 0.2], atol=1e-11)
    with pytest.raises(FitError):
        quadratic_origin_fit(g, 1e-3)


def test_neumann_ball_has_one_dimensional_null_space():
    g = ball_grid(1.0, 8, 8, 16)
    S = assemble(RobinProblem(c=0.0, outer=Neumann()), g)
    sv, _, count, _ = near_null_space(S, k=3, threshold=1e-8)
    assert count == 1 and sv[1] > 1.0


def test_grid_validation():
    with pytest.raises(ParameterError):
        SphericalGrid(1.0, 4, 4, 6)
    with pytest.raises(ParameterError):
        SphericalGrid(1.0, 4, 4, 8, r_min=2.0)


def test_node_classes():
    g = half_ball_grid(1.0, 4, 4, 8, r_min=0.1)
    cls = g.node_classes().reshape(g.shape)
    assert set(cls.ravel()) == {"interior", "flat_face", "sphere_face", "inner_face"}
    assert np.all(cls[-1] == "sphere_face") and np.all(cls[0] == "inner_face")
