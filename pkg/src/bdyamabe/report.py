"""Verification reports and their JSON/CSV serialization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA_VERSION = "1.0"

PASS = "pass"
FAIL = "fail"
INDETERMINATE = "indeterminate"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class VerificationReport:
    """Outcome of a single numerical check.

    ``reference`` values carry a provenance tag in ``provenance`` (one of
    ``"exact"``, ``"derived"``, ``"literature"``). ``runtime`` is kept in
    memory only so that serialized reports are reproducible byte for byte.
    """

    check_id: str
    anchor: str
    inputs: dict = field(default_factory=dict)
    computed: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    provenance: str = "derived"
    tolerance: float | None = None
    verdict: str = INDETERMINATE
    expected_fail: bool = False
    notes: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def ok(self) -> bool:
        """True when the outcome matches expectations (controls must fail)."""
        if self.expected_fail:
            return self.verdict == FAIL
        return self.verdict == PASS

    def set_verdict(self, condition: bool | None) -> "VerificationReport":
        if condition is None:
            self.verdict = INDETERMINATE
        else:
            self.verdict = PASS if condition else FAIL
        return self

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "anchor": self.anchor,
            "inputs": to_jsonable(self.inputs),
            "computed": to_jsonable(self.computed),
            "reference": to_jsonable(self.reference),
            "provenance": self.provenance,
            "tolerance": to_jsonable(self.tolerance),
            "verdict": self.verdict,
            "expected_fail": self.expected_fail,
            "notes": list(self.notes),
        }


def reports_to_json(reports, meta: dict | None = None) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "meta": to_jsonable(meta or {}),
        "checks": [r.to_dict() for r in reports],
        "summary": {
            "total": len(reports),
            "passed": sum(r.verdict == PASS for r in reports),
            "failed": sum(r.verdict == FAIL for r in reports),
            "indeterminate": sum(r.verdict == INDETERMINATE for r in reports),
            "unexpected": sum(not r.ok for r in reports),
        },
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=",", lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    v = to_jsonable(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return v


def reports_to_csv(reports) -> str:
    header = ["check_id", "anchor", "verdict", "expected_fail", "tolerance", "computed", "reference"]
    rows = [
        [r.check_id, r.anchor, r.verdict, r.expected_fail, r.tolerance, r.computed, r.reference]
        for r in reports
    ]
    return _csv_text(header, rows)


def table_to_csv(columns: dict) -> str:
    """Write a column table (e.g. a rho-ladder) as CSV text: header + one row per entry."""
    header = list(columns)
    cols = [np.atleast_1d(np.asarray(columns[k])) for k in header]
    nrow = len(cols[0]) if cols else 0
    if any(len(c) != nrow for c in cols):
        raise ValueError("all columns must have the same length")
    return _csv_text(header, zip(*cols))


def emit_report(reports, out: str | Path, fmt: str = "json", meta: dict | None = None) -> Path:
    """Write ``reports`` to ``out`` in the requested format and return the path."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        text = reports_to_json(reports, meta)
    elif fmt == "csv":
        text = reports_to_csv(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(out, "w", newline="\n") as fh:
        fh.write(text)
    return out
