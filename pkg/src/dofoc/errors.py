"""Exception hierarchy shared by the numerical layers and the CLI."""

from __future__ import annotations


class DofocError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DofocError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidationError(DofocError, ValueError):
    """Inputs are inconsistent (grid mismatch, negative weight, bad bounds)."""


class DegenerateDistributionError(ValidationError):
    """The order distribution has (numerically) zero mass."""


class AccuracyError(DofocError, ArithmeticError):
    """A series or quadrature could not reach the requested accuracy.

    ``estimate`` carries the achieved error estimate.
    """

    def __init__(self, message: str, estimate: float) -> None:
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


class DynamicsEvaluationError(DofocError, ArithmeticError):
    """A user supplied map returned NaN or Inf."""


class SolverDivergenceError(DofocError, RuntimeError):
    """The implicit step iteration did not converge.

    ``step`` is the time index at which the failure occurred.
    """

    def __init__(self, message: str, step: int) -> None:
        super().__init__(f"{message} at step {step}")
        self.step = step


class ResolutionError(DofocError, ValueError):
    """A needle window contains no grid node; use a finer grid."""
