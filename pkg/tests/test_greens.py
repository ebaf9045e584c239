import numpy as np
import pytest

from bdyamabe.errors import ParameterError
from bdyamabe.geometry import fermi_synthetic_metric
from bdyamabe.grid import annulus_grid
from bdyamabe.greens import (check_green_euclidean, closed_form_defects, euclidean_green, extract_expansion,
                             solve_green_mixed)


@pytest.fixture(scope="module")
def green_unit():
    return solve_green_mixed(None, 1.0, 0.01)


def test_closed_form_is_exact():
    d = closed_form_defects(1.5)
    assert d["laplacian"] < 1e-12 and d["flat_derivative"] == 0.0 and d["outer_trace"] < 1e-14


@pytest.mark.parametrize("delta", [1.0, 2.0])
def test_euclidean_green_matches_closed_form(delta):
    rep = check_green_euclidean(delta)
    assert rep.passed
    assert rep.computed["mid_annulus_rel_error"] < 1e-3
    assert abs(rep.computed["A"] + 1 / delta) < 2e-3


def test_expansion_fields(green_unit):
    e = extract_expansion(green_unit)
    assert e["A"] == pytest.approx(-1.0, abs=2e-3)
    assert len(e["scan"]) >= 2
    log = extract_expansion(green_unit, mode="log-audit")
    assert abs(log["log_coefficient"]) < 2e-3


def test_green_is_positive_and_leading_order(green_unit):
    assert green_unit.values.min() > 0
    lr = green_unit.leading_ratio()
    assert np.all(np.abs(lr - 1) < 0.05)


def test_interpolation_matches_closed_form(green_unit, rng):
    pts = rng.normal(size=(50, 3))
    pts[:, 2] = np.abs(pts[:, 2])
    pts *= (rng.uniform(0.05, 0.4, 50) / np.linalg.norm(pts, axis=-1))[:, None]
    exact = euclidean_green(1.0)(pts)
    assert np.max(np.abs(green_unit(pts) - exact) / exact) < 5e-3


def test_csv_export(green_unit):
    lines = green_unit.to_csv().strip().splitlines()
    assert len(lines) == green_unit.grid.size + 1


def test_parameter_validation():
    with pytest.raises(ParameterError):
        solve_green_mixed(None, 1.0, 0.2)
    with pytest.raises(ParameterError):
        solve_green_mixed(None, -1.0, 0.01)
    with pytest.raises(ParameterError):
        solve_green_mixed(None, 1.0, 0.01, grid=annulus_grid(0.02, 1.0, 96, 16, 16))
    with pytest.raises(ParameterError):
        solve_green_mixed(None, 1.0, 0.01, grid=annulus_grid(0.01, 1.0, 8, 16, 16))


def test_curved_green_has_finite_mass_constant():
    g = fermi_synthetic_metric(np.diag([0.2, -0.2]))
    G = solve_green_mixed(g, 0.5, 0.01, grid=annulus_grid(0.01, 0.5, 64, 12, 12))
    assert G.values.min() > 0
    e = extract_expansion(G)
    assert np.isfinite(e["A"]) and abs(e["A"] + 2.0) < 0.5
