"""Exception types raised by the library."""


class BdYamabeError(Exception):
    """Base class for all library errors."""


class DomainError(BdYamabeError, ValueError):
    """A point lies outside the domain where an evaluator is defined."""


class ParameterError(BdYamabeError, ValueError):
    """Invalid model or configuration parameters."""


class PreconditionError(BdYamabeError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class SingularMetricError(BdYamabeError, ArithmeticError):
    """The metric is not invertible at a queried point."""


class SolverError(BdYamabeError, RuntimeError):
    """A linear, nonlinear or eigen solve failed."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class FitError(BdYamabeError, RuntimeError):
    """A regression or extrapolation is degenerate."""
