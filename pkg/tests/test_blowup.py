import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdyamabe.blowup import (bubble_convergence_audit, chart_blowup_sequence, constant_sequence,
                             euclidean_refined_audit, isolated_bound_constant, isolated_constant, refined_approx_audit,
                             rescale, sequence_residuals, simple_blowup_check, simple_bounds_audit,
                             slow_decay_sequence, spherical_average_w, synth_blowup_sequence, two_bubble_sequence,
                             w_critical_points, w_rescaling_defect)
from bdyamabe.errors import ParameterError, PreconditionError
from bdyamabe.linear import solve_correction_term
from bdyamabe.models import BubbleParams, bubble_field
from bdyamabe.pohozaev import green_model

EPS = (0.1, 0.03, 0.01, 0.003)


@pytest.fixture(scope="module")
def seq():
    return synth_blowup_sequence(0.5, EPS)


def test_sequence_peaks_and_scales(seq):
    assert seq.increasing
    lam = 0.5
    # peak (eps lam)^(-1/2) reads back as eps lam
    assert np.allclose(seq.eps, [e * lam for e in EPS], rtol=1e-13)


def test_sequence_validation():
    with pytest.raises(ParameterError):
        synth_blowup_sequence(0.5, (0.01, 0.1))
    with pytest.raises(ParameterError):
        synth_blowup_sequence(0.5, EPS, {"kind": "multiplicative", "amplitude": 0.5})
    with pytest.raises(ParameterError):
        synth_blowup_sequence(0.5, EPS, {"kind": "additive"})
    with pytest.raises(ParameterError):
        constant_sequence([1.0, -1.0])


def test_sequence_solves_the_system(seq):
    for interior, boundary in sequence_residuals(seq):
        assert max(interior, boundary) < 1e-10


@settings(max_examples=10)
@given(kappa=st.floats(0.05, 0.95), eps=st.floats(1e-3, 0.5), r=st.floats(0.1, 20.0))
def test_rescaling_is_exact(kappa, eps, r):
    u = bubble_field(BubbleParams(kappa, eps, (), 3))
    v = rescale(u, eps).field
    y = np.array([[0.3 * r, -0.2 * r, 0.5 * r]])
    assert v.value(y)[0] == pytest.approx(np.sqrt(eps) * u.value(eps * y)[0], rel=1e-14)
    assert w_rescaling_defect(u, eps, [r]) < 1e-10


def test_bubble_convergence_exact(seq):
    rep = bubble_convergence_audit(seq)
    assert rep.passed
    assert max(d["C0"] for d in rep.computed["deviations"]) < 1e-10


def test_bubble_convergence_wrong_scale_fails(seq):
    assert not bubble_convergence_audit(seq, lam_mismatch=True).passed


def test_perturbed_sequence_does_not_converge():
    s = synth_blowup_sequence(0.5, EPS, {"kind": "multiplicative", "amplitude": 0.05, "wavenumber": 3.0})
    assert not bubble_convergence_audit(s).passed


def test_isolated_bound_uniform(seq):
    rep = isolated_bound_constant(seq)
    assert rep.passed
    C = rep.computed["C"]
    assert max(C) / min(C) < 1.01 and rep.computed["rescaling_defect"] < 1e-10


def test_slow_decay_is_isolated_but_not_simple():
    s = slow_decay_sequence((0.1, 0.01, 0.001, 1e-4))
    assert isolated_bound_constant(s).passed
    assert simple_blowup_check(s).verdict != "pass"


def test_isolated_bound_detects_growth():
    fields = [bubble_field(BubbleParams(0.5, e, (), 3)) * (1.0 / e) ** 0.5 for e in EPS]
    from bdyamabe.blowup import BlowupSequence
    assert not isolated_bound_constant(BlowupSequence(fields, 0.5)).passed


def test_isolated_constant_of_constant_field():
    u = constant_sequence([2.0]).fields[0]
    assert isolated_constant(u, 0.25) == pytest.approx(2.0 * 0.5, rel=1e-12)


def test_spherical_average_of_constant():
    u = constant_sequence([3.0]).fields[0]
    ub, w = spherical_average_w(u, 0.4)
    assert ub == pytest.approx(3.0, rel=1e-12) and w == pytest.approx(3.0 * 0.4**0.5, rel=1e-12)


def test_single_bubble_is_simple(seq):
    rep = simple_blowup_check(seq)
    assert rep.passed
    for row in rep.computed["rows"]:
        assert row["count"] == 1 and row["certified"] and row["negative_after_first"]


def test_w_critical_point_location():
    # w(r) for the half-space bubble centred on the boundary peaks near r ~ eps
    u = bubble_field(BubbleParams(0.5, 0.01, (), 3))
    cp = w_critical_points(u, 1e-5, 0.5)
    assert cp["count"] == 1 and 0.001 < cp["roots"][0] < 0.1


def test_two_bubble_control_not_simple():
    rep = simple_blowup_check(two_bubble_sequence(0.5, EPS))
    assert rep.verdict != "pass"
    assert any(r["count"] != 1 for r in rep.computed["rows"])


def test_simple_bounds(seq):
    rep = simple_bounds_audit(seq, green_model(0.0))
    assert rep.passed and min(r["lower"] for r in rep.computed["rows"]) > 0


def test_chart_sequence_fields():
    s = chart_blowup_sequence(0.5, (0.04, 0.02), np.diag([0.5, -0.5]), nr=24, nt=12, nphi=16)
    for m, e in zip(s.members, (0.04, 0.02)):
        assert m.eps_construction == e
        assert m.eps == pytest.approx(e * m.newton["scale_ratio"], rel=1e-12)
        assert m.diff.shape == (m.grid.size,)
        assert abs(m.newton["scale_ratio"] - 1) < 0.2


def test_refined_audit_preconditions():
    pi0 = np.diag([0.5, -0.5])
    s = chart_blowup_sequence(0.5, (0.04, 0.02), pi0, nr=24, nt=12, nphi=16)
    good = [solve_correction_term(pi0, e, 0.5) for e in s.eps]
    with pytest.raises(PreconditionError):
        refined_approx_audit(s, good[:1], 0.5)
    with pytest.raises(PreconditionError):
        refined_approx_audit(s, good, 0.4)
    with pytest.raises(PreconditionError):
        refined_approx_audit(s, good[::-1], 0.5)
    with pytest.raises(PreconditionError):
        refined_approx_audit(s, [solve_correction_term(np.diag([1.0, -1.0]), s.eps[0], 0.5), good[1]], 0.5)


def test_euclidean_refined_audit_is_trivial():
    rep = euclidean_refined_audit(0.5, (0.04, 0.02), nr=24, nt=12, nphi=16)
    assert rep.passed
    for row in rep.computed["rows"]:
        assert row["with_s0"] < 1e-10 and row["without_s0"] < 1e-10
