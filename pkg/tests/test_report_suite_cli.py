import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from bdyamabe.cli import main
from bdyamabe.errors import ParameterError
from bdyamabe.report import VerificationReport, emit_report, reports_to_csv, reports_to_json, table_to_csv
from bdyamabe.suite import SuiteConfig, run_suite


def _report():
    return VerificationReport("demo", "anchor", inputs={"k": np.float64(0.5)}, computed={"x": np.array([1.0, 2.0])},
                              reference={"x": 0.0}, provenance="exact", tolerance=1e-10).set_verdict(True)


def test_empty_report_is_valid_json():
    doc = json.loads(reports_to_json([]))
    assert doc["checks"] == [] and doc["summary"]["total"] == 0


def test_single_check_fields():
    doc = json.loads(reports_to_json([_report()], {"seed": 0}))
    c = doc["checks"][0]
    assert set(c) == {"check_id", "anchor", "inputs", "computed", "reference", "provenance", "tolerance", "verdict",
                      "expected_fail", "notes"}
    assert c["computed"]["x"] == [1.0, 2.0] and c["verdict"] == "pass"
    assert doc["meta"] == {"seed": 0} and doc["summary"]["passed"] == 1


def test_verdict_logic():
    r = VerificationReport("c", "a")
    assert r.verdict == "indeterminate" and not r.ok
    r.expected_fail = True
    assert r.set_verdict(False).ok and not r.passed
    assert not r.set_verdict(True).ok


def test_rho_ladder_csv():
    rho = np.geomspace(1e-3, 1e-1, 5)
    text = table_to_csv({"rho": rho, "P": -np.pi * rho})
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["rho", "P"] and len(rows) == 6
    assert float(rows[3][0]) == rho[2]  # repr round trip
    with pytest.raises(ValueError):
        table_to_csv({"a": [1, 2], "b": [1]})


def test_reports_csv_and_emit(tmp_path):
    rows = list(csv.reader(io.StringIO(reports_to_csv([_report()]))))
    assert rows[1][0] == "demo" and rows[1][2] == "pass"
    p = emit_report([_report()], tmp_path / "sub" / "r.json")
    assert json.loads(p.read_text())["checks"][0]["check_id"] == "demo"
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "r.xml", "xml")


@pytest.mark.parametrize("bad", [{"suites": ("nope",)}, {"kappas": (1.5,)}, {"dim": 2}, {"grid": "huge"},
                                 {"tol_class": "lax"}, {"tolerances": {"residual": -1.0}},
                                 {"tolerances": {"bogus": 1.0}}, {"radius": 0.0}, {"formats": ("xml",)}])
def test_config_validation(bad):
    with pytest.raises(ParameterError):
        SuiteConfig(**bad)


def test_config_round_trip_and_tolerances():
    cfg = SuiteConfig(tol_class="strict", tolerances={"green": 5e-3})
    assert SuiteConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.tol("green") == 5e-3 and cfg.tol("residual") == pytest.approx(1e-11)
    with pytest.raises(ParameterError):
        SuiteConfig.from_dict({"colour": "red"})


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ParameterError):
        run_suite(SuiteConfig(suites=("models",), out=str(blocker / "reports")))


def test_models_suite_reports(tmp_path):
    res = run_suite(SuiteConfig(suites=("models",), out=str(tmp_path)))
    assert res.exit_code == 0 and {p.name for p in res.paths} == {"report.json", "report.csv"}
    doc = json.loads((tmp_path / "report.json").read_text())
    assert all(c["inputs"]["suite"] == "models" for c in doc["checks"])
    assert any(c["expected_fail"] and c["verdict"] == "fail" for c in doc["checks"])


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["--suite", "models,hyperbolic", "--out", str(tmp_path), "--quiet"]) == 0
    assert main(["--suite", "nope", "--out", str(tmp_path), "--quiet"]) == 2
    assert main(["--kappa", "2", "--out", str(tmp_path), "--quiet"]) == 2


def test_cli_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"suites": ["mass"], "formats": ["json"]}))
    out = tmp_path / "out"
    assert main(["--suite", "models", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert {c["inputs"]["suite"] for c in doc["checks"]} == {"mass"}
    assert not (out / "report.csv").exists()


def test_cli_negative_control_exits_nonzero(tmp_path):
    assert main(["--suite", "kernel", "--negative-control", "--out", str(tmp_path), "--quiet"]) == 1


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_suite(SuiteConfig(suites=("models", "mass"), seed=7, out=str(out)))
    for name in ("report.json", "report.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bdyamabe", "--suite", "greens", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "green_euclidean" in proc.stdout
