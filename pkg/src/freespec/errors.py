"""Shared error types for freespec.

Every error carries the process exit code the CLI reports for it:
1 for parse and I/O failures, 2 for numerical failures, 3 for violated
preconditions.
"""

from __future__ import annotations

from collections.abc import Iterable


class FreeSpecError(Exception):
    """Base class for every error raised by freespec."""

    exit_code: int = 1


class LoadError(FreeSpecError):
    """Raised when an input CSV or scenario file cannot be read or parsed."""


class CacheError(FreeSpecError):
    """Raised when the ASD cache directory cannot be written."""


class PreconditionError(FreeSpecError):
    """Raised when an operation is called outside its documented domain."""

    exit_code = 3


class InvalidArgumentError(PreconditionError, ValueError):
    """Raised on dimension mismatches, out-of-range values and unknown options."""


class DegenerateRowError(InvalidArgumentError):
    """Raised when a channel has zero variance and cannot be standardized."""

    def __init__(self, rows: Iterable[int]) -> None:
        self.rows = tuple(int(r) for r in rows)
        shown = ", ".join(str(r) for r in self.rows[:10])
        more = "" if len(self.rows) <= 10 else f" (+{len(self.rows) - 10} more)"
        super().__init__(
            f"Row(s) {shown}{more} have zero variance; add noise (eta > 0) before standardizing."
        )


class DomainError(InvalidArgumentError):
    """Raised when a Cauchy transform is evaluated outside the upper half-plane."""


class InvalidAsdError(InvalidArgumentError):
    """Raised when a spectral density has no support to test against."""


class NoAnomalyError(PreconditionError):
    """Raised when location is requested for a report without outliers."""


class WeightingError(PreconditionError):
    """Raised when outlier eigenvalues of mixed sign make the weighting undefined."""


class NumericalError(FreeSpecError):
    """Base class for numerical failures."""

    exit_code = 2


class ConditioningError(NumericalError):
    """Raised when a matrix to be inverted is numerically singular."""

    def __init__(self, message: str, condition: float) -> None:
        self.condition = condition
        super().__init__(message)


class HerglotzError(NumericalError):
    """Raised when an iterate leaves the operator upper half-plane."""


class NonConvergenceError(NumericalError):
    """Raised when the subordination fixed point is not reached in time."""

    def __init__(self, residual: float, iterations: int, points: int = 1) -> None:
        self.residual = residual
        self.iterations = iterations
        self.points = points
        super().__init__(
            f"Fixed-point iteration did not converge at {points} point(s) after "
            f"{iterations} iterations (residual {residual:.3e})."
        )
