import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdyamabe.errors import FitError, ParameterError
from bdyamabe.geometry import euclidean_metric, fermi_synthetic_metric, metric_from_spec, warped_metric
from bdyamabe.models import BubbleParams, WarpedBubble, bubble_field
from bdyamabe.pohozaev import (adm_mass, brendle_chen_I, check_P_I_relation, check_pohozaev_identity,
                               default_constants, fit_rho_log, green_model, log_ladder, pohozaev_P,
                               pohozaev_P_prime, schwarzschild_half_metric, sign_restriction_experiment)

ZERO = np.zeros((2, 2))


def test_default_constants():
    assert default_constants(0.5, 3) == (-1.5, 1.0)
    assert default_constants(0.2, 4) == pytest.approx((-1.6, 2.0))


@settings(max_examples=15)
@given(kappa=st.floats(0.05, 0.95), eps=st.floats(0.2, 3.0), rho=st.sampled_from([0.5, 1.0, 2.0]),
       n=st.sampled_from([3, 4]))
def test_bubble_pohozaev_quantity_vanishes(kappa, eps, rho, n):
    K, c = default_constants(kappa, n)
    rep = pohozaev_P(bubble_field(BubbleParams(kappa, eps, (0.1,) * (n - 1), n)), rho, K, c, m=16)
    assert abs(rep.P) < 1e-8
    assert rep.bookkeeping() < 1e-12


def test_wrong_constants_break_the_identity():
    K, c = default_constants(0.5, 3)
    u = bubble_field(BubbleParams(0.5, 0.7, (), 3))
    assert abs(pohozaev_P(u, 1.0, 1.2 * K, c).P) > 1e-3


def test_identity_on_euclidean_chart_is_binding():
    K, c = default_constants(0.5, 3)
    rep = check_pohozaev_identity(euclidean_metric(3), bubble_field(BubbleParams(0.5, 0.7, (0.1, -0.2), 3)), 1.0,
                                  K, c, m=12)
    assert rep.passed and rep.computed["binding"] and rep.computed["rhs"] == 0.0


def test_identity_on_warped_exact_solution():
    K, c = default_constants(0.5, 3)
    wb = WarpedBubble(BubbleParams(0.5, 0.6, (), 3), 0.1, 0.05)
    rep = check_pohozaev_identity(warped_metric(3, 0.1, 0.05), wb.field(), 0.5, K, c, tol=1e-6, m=12)
    assert rep.computed["binding"] and rep.passed
    assert abs(rep.computed["rhs"]) > 1e-4  # the curvature terms are active


def test_general_identity_on_fermi_metric():
    K, c = default_constants(0.5, 3)
    g = fermi_synthetic_metric(np.diag([0.2, -0.2]))
    rep = check_pohozaev_identity(g, bubble_field(BubbleParams(0.5, 0.6, (), 3)), 0.8, K, c, tol=1e-6, m=12)
    assert not rep.computed["binding"] and rep.passed
    assert rep.computed["defect"] > 1e-4 and rep.computed["general_defect"] < 1e-6


def test_adm_mass_euclidean_is_zero():
    rep = adm_mass(euclidean_metric(3))
    assert rep.mass == 0.0 and rep.decay_ok


@pytest.mark.parametrize("A", [0.25, 1.0])
def test_half_schwarzschild_mass(A):
    rep = adm_mass(schwarzschild_half_metric(A))
    assert rep.mass > 0 and rep.mass == pytest.approx(16 * math.pi * A, rel=1e-8)
    assert not rep.flags


def test_adm_mass_flags_non_decaying_metric():
    g = metric_from_spec({"kind": "conformal", "n": 3, "factor": {"type": "quadratic", "c0": 2.0, "c2": 0.0}})
    rep = adm_mass(g)
    assert "decay unverified" in rep.flags


@given(A=st.floats(-2, 2), rho=st.floats(1e-3, 1.0))
def test_mass_integral_of_green_model(A, rho):
    assert brendle_chen_I(green_model(A), ZERO, rho) == pytest.approx(16 * math.pi * A, abs=1e-9)
    assert pohozaev_P_prime(green_model(A), rho) == pytest.approx(-math.pi * A, abs=1e-9)


def test_trace_free_pi_term_integrates_to_zero():
    a = brendle_chen_I(green_model(0.3), np.diag([1.0, -1.0]), 0.1)
    assert a == pytest.approx(16 * math.pi * 0.3, rel=1e-12)
    b = brendle_chen_I(green_model(0.3), np.eye(2), 0.1)
    assert abs(b - a) > 1e-3


def test_mass_integral_needs_three_dimensions():
    with pytest.raises(ParameterError):
        brendle_chen_I(green_model(0.3, n=4), ZERO, 0.1)


def test_P_I_relation_fit():
    rep = check_P_I_relation(green_model(0.3, 0.4), ZERO)
    fit = rep.computed["fit"]
    assert rep.passed and fit["R2"] > 0.99
    assert fit["C1"] == pytest.approx(-math.pi * 0.16, rel=1e-8)
    triv = check_P_I_relation(green_model(0.3), ZERO)
    assert triv.passed and triv.computed["fit"] is None


def test_fit_rho_log_exact_and_degenerate():
    rho, w = log_ladder()
    fit = fit_rho_log(rho, 2.5 * rho * np.abs(np.log(rho)), w)
    assert fit["C"] == pytest.approx(2.5) and fit["R2"] == pytest.approx(1.0)
    with pytest.raises(FitError):
        fit_rho_log([1.0, 1.0], [0.1, 0.2])


def test_sign_experiment():
    assert sign_restriction_experiment(green_model(-0.3)).passed
    bad = sign_restriction_experiment(green_model(0.3))
    assert bad.verdict == "fail" and bad.computed["liminf_estimate"] == pytest.approx(-math.pi * 0.3, rel=1e-6)
