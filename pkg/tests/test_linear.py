import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdyamabe.errors import ParameterError, PreconditionError
from bdyamabe.geometry import fermi_synthetic_metric
from bdyamabe.grid import half_ball_grid
from bdyamabe.linear import (correction_grid, cutoff_chi, fit_kernel_combination, kernel_grid, kernel_spectrum,
                             solve_chart_bubble, solve_correction_term)
from bdyamabe.models import BubbleParams, bubble_field, eval_jacobi_field


@pytest.fixture(scope="module")
def coarse_correction():
    g = correction_grid(nr=80, nt=40)
    pi0 = np.diag([1.0, -1.0])
    return g, pi0, solve_correction_term(pi0, 0.01, 0.5, g)


def test_kernel_census_counts_three_modes():
    census = kernel_spectrum(0.5, kernel_grid(0.5))
    s = census.summary()
    assert s["count"] == 3 and s["gap_ratio"] >= 10 and s["max_fit_residual"] < 5e-2


def test_kernel_census_control_loses_the_kernel():
    census = kernel_spectrum(0.5, kernel_grid(0.5), coef_scale=1.1)
    assert census.count != 3


def test_kernel_census_is_deterministic():
    a = kernel_spectrum(0.5, kernel_grid(0.5), modes=(1,)).summary()
    b = kernel_spectrum(0.5, kernel_grid(0.5), modes=(1,)).summary()
    assert a == b


def test_fit_kernel_combination_recovers_coefficients():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(200, 3))
    y[:, 2] = np.abs(y[:, 2])
    psi = 0.3 * eval_jacobi_field(1, 0.4, y, 3) - 1.2 * eval_jacobi_field(3, 0.4, y, 3)
    coef, res = fit_kernel_combination(psi, 0.4, y)
    assert np.allclose(coef, [0.3, 0.0, -1.2], atol=1e-10) and res < 1e-10


@given(eps=st.floats(1e-3, 1.0), r=st.floats(0.0, 1e4))
def test_cutoff_range_and_support(eps, r):
    v = cutoff_chi(eps, r)
    assert 0.0 <= v <= 1.0
    if eps * r <= 1.0:
        assert v == 1.0
    if eps * r >= 2.0:
        assert v == 0.0


def test_cutoff_validation():
    with pytest.raises(ParameterError):
        cutoff_chi(0.0, 1.0)


def test_correction_normalization(coarse_correction):
    _, _, res = coarse_correction
    assert res.normalization["max_rel"] < 1e-10
    assert res.solve_residual < 1e-8
    assert res.pi0 is not None and res.eps == 0.01


def test_correction_linear_in_pi0(coarse_correction):
    g, pi0, res = coarse_correction
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    b = solve_correction_term(q, 0.01, 0.5, g)
    ab = solve_correction_term(pi0 + 2 * q, 0.01, 0.5, g)
    y = np.random.default_rng(1).normal(size=(100, 3))
    y[:, 2] = np.abs(y[:, 2])
    assert np.max(np.abs(ab(y) - res(y) - 2 * b(y))) < 1e-10 * res.sup_norm


def test_correction_scales_with_eps(coarse_correction):
    g, pi0, res = coarse_correction
    r2 = solve_correction_term(pi0, 0.02, 0.5, g)
    assert r2.sup_norm / res.sup_norm == pytest.approx(2.0, rel=0.05)


def test_correction_decay_exponents(coarse_correction):
    _, _, res = coarse_correction
    assert abs(res.decay["exponent_s0"]) <= 0.3
    assert abs(res.decay["exponent_s1"] + 1.0) <= 0.3


def test_correction_vanishes_for_umbilic_boundary():
    res = solve_correction_term(np.zeros((2, 2)), 0.01, 0.5, correction_grid(nr=40, nt=20))
    assert res.sup_norm == 0.0


@pytest.mark.parametrize("bad", [np.eye(2), np.array([[0.0, 1.0], [0.5, 0.0]]), np.zeros(3)])
def test_correction_preconditions(bad):
    with pytest.raises(PreconditionError):
        solve_correction_term(bad, 0.01, 0.5, correction_grid(nr=40, nt=20))


def test_chart_solver_euclidean_reproduces_bubble():
    kappa = 0.5
    seed = bubble_field(BubbleParams(kappa, 2.0, (), 3))
    errs = []
    for n in (24, 48):
        g = half_ball_grid(10.0, n, n // 2, 16, h0=1.2 / n)
        sol = solve_chart_bubble(None, kappa, g, seed, axisymmetric=True)
        assert sol.increments[-1] < 1e-10
        errs.append(np.max(np.abs(sol.values - seed.value(g.centers()))) / seed.value(np.zeros((1, 3)))[0])
    assert errs[1] < 1e-2 and errs[1] < errs[0] / 2.5


def test_chart_solver_full_grid_matches_axisymmetric():
    kappa = 0.5
    seed = bubble_field(BubbleParams(kappa, 2.0, (), 3))
    g = half_ball_grid(10.0, 16, 8, 8, h0=0.1)
    a = solve_chart_bubble(None, kappa, g, seed, axisymmetric=True)
    b = solve_chart_bubble(fermi_synthetic_metric(np.zeros((2, 2))), kappa, g, seed)
    assert np.allclose(a.values, b.values, atol=1e-9)


def test_chart_solver_curved_metric_converges():
    kappa = 0.5
    seed = bubble_field(BubbleParams(kappa, 2.0, (), 3))
    g = half_ball_grid(10.0, 16, 8, 8, h0=0.1)
    sol = solve_chart_bubble(fermi_synthetic_metric(np.diag([0.02, -0.02])), kappa, g, seed)
    inc = sol.increments
    assert inc[-1] < 1e-10 and len(inc) <= 8
    assert not np.allclose(sol.values, solve_chart_bubble(None, kappa, g, seed, axisymmetric=True).values)


def test_chart_solver_rejects_axisymmetric_curved():
    g = half_ball_grid(5.0, 8, 4, 8)
    seed = bubble_field(BubbleParams(0.5, 2.0, (), 3))
    with pytest.raises(ParameterError):
        solve_chart_bubble(fermi_synthetic_metric(np.diag([0.1, -0.1])), 0.5, g, seed, axisymmetric=True)
