"""Command-line entry point: ``python -m bdyamabe``.

Grammar::

    python -m bdyamabe [--suite NAME[,NAME...]] [--dim N] [--kappa K[,K...]]
                       [--grid coarse|fine] [--radius R] [--tol-class strict|standard|loose]
                       [--out DIR] [--seed S] [--format json|csv|both] [--config FILE]
                       [--no-controls] [--negative-control] [--quiet]

Suite names: models, kernel, hyperbolic, pohozaev, mass, greens, blowup, all.
Values in the JSON ``--config`` file override the flags. Exit status is 0
iff every check behaves as expected (controls must fail); 2 on usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import sys

from .errors import ParameterError
from .suite import GRID_LEVELS, SUITES, TOL_CLASSES, SuiteConfig, load_config, run_suite


def _csv(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="python -m bdyamabe", description="Run numerical verification suites.")
    p.add_argument("--suite", default="all", help=f"comma list of {', '.join(SUITES)} or all")
    p.add_argument("--dim", type=int, default=3, help="dimension n (discrete solvers require 3)")
    p.add_argument("--kappa", default="0.5", help="comma list of kappa values")
    p.add_argument("--grid", choices=sorted(GRID_LEVELS), default="coarse")
    p.add_argument("--radius", type=float, default=20.0, help="truncation radius of the kernel census")
    p.add_argument("--tol-class", choices=sorted(TOL_CLASSES), default="standard")
    p.add_argument("--out", default="reports", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.add_argument("--config", help="JSON file whose keys override the flags")
    p.add_argument("--no-controls", action="store_true", help="skip negative-control checks")
    p.add_argument("--negative-control", action="store_true",
                   help="run the perturbed kernel operator as the primary check")
    p.add_argument("--quiet", action="store_true")
    return p


def config_from_args(args) -> SuiteConfig:
    d = {
        "suites": _csv(args.suite),
        "dim": args.dim,
        "kappas": tuple(float(k) for k in _csv(args.kappa)),
        "grid": args.grid,
        "radius": args.radius,
        "tol_class": args.tol_class,
        "out": args.out,
        "seed": args.seed,
        "formats": ("json", "csv") if args.format == "both" else (args.format,),
        "controls": not args.no_controls,
        "negative_control": args.negative_control,
    }
    if args.config:
        d.update(load_config(args.config))
    return SuiteConfig.from_dict(d)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        cfg = config_from_args(args)
        res = run_suite(cfg, log=log)
    except (ParameterError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        for r in res.reports:
            tag = " (control)" if r.expected_fail else ""
            flag = "" if r.ok else "  <-- unexpected"
            print(f"{r.check_id:28s} {r.verdict:13s}{tag}{flag}")
        for path in res.paths:
            print(f"wrote {path}")
    return res.exit_code
