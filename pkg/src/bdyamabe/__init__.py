"""Numerical verification tools for the boundary Yamabe system with negative
interior and positive boundary constants.

Submodules: ``geometry`` (metrics, curvature, conformal laws), ``models``
(bubbles, horosphere family, Jacobi fields), ``hyperbolic`` (inversion and
hyperboloid pictures), ``grid``/``linear`` (finite-volume solvers, kernel
census, correction term), ``greens``, ``pohozaev`` (Pohozaev identity, mass,
``I``), ``blowup`` (synthetic blow-up sequences) and ``suite``/``cli``.
"""
from .report import VerificationReport, emit_report
from .suite import SuiteConfig, run_suite

__version__ = "0.1.0"
__all__ = ["SuiteConfig", "VerificationReport", "emit_report", "run_suite", "__version__"]
