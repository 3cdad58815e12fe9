"""Error hierarchy shared by the library and the CLI."""

from typing import Any, Optional, Sequence


class EpirkError(Exception):
    """Base class for all library errors.

    ``stage`` is filled in by the integrator when the failure happened while
    computing a particular stage (1-based, final stage is ``s + 1``).
    """

    def __init__(self, message: str, stage: Optional[int] = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        base = super().__str__()
        if self.stage is not None:
            return f"{base} (stage {self.stage})"
        return base


class InvalidArgumentError(EpirkError, ValueError):
    """An argument is outside the accepted domain."""


class TableauParseError(InvalidArgumentError):
    """Malformed tableau text."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NumericFailureError(EpirkError, ArithmeticError):
    """NaN, Inf or overflow in a numerical kernel."""

    def __init__(self, message: str, norm: Optional[float] = None, stage: Optional[int] = None):
        super().__init__(message, stage=stage)
        self.norm = norm


class KrylovBudgetExceededError(EpirkError):
    """The Krylov tolerance could not be reached within the matvec budget."""

    def __init__(self, message: str, best_result: Any, est_error: float):
        super().__init__(message)
        self.best_result = best_result
        self.est_error = est_error


class PlanInfeasibleError(EpirkError):
    """The requested strategy cannot be realized for a method."""

    def __init__(self, message: str, stage: int, scales: Sequence[Any] = ()):
        super().__init__(message, stage=stage)
        self.scales = tuple(scales)


class NotAvailableError(EpirkError, LookupError):
    """A requested feature is not provided for this method."""


class StiffnessFailureError(EpirkError):
    """The adaptive controller drove the step size below the underflow limit."""

    def __init__(self, message: str, t: float, h: float):
        super().__init__(message)
        self.t = t
        self.h = h


class IntegrationError(EpirkError):
    """A step failed; ``report`` holds the run up to the failure."""

    def __init__(self, message: str, report: Any, cause: Optional[BaseException] = None):
        super().__init__(message, stage=getattr(cause, "stage", None))
        self.report = report
        self.cause = cause


class AcceptanceFailureError(EpirkError):
    """An experiment finished but missed its acceptance threshold."""
