"""
Exception hierarchy of the laboratory.

Every computation failure is a LadderLabError with a short error_type tag,
so the command line can report it uniformly and exit with status 1.
"""

from typing import Optional


class LadderLabError(Exception):
    """Base class for all computation errors."""

    error_type = "computation"

    def __init__(self, message: str, error_type: Optional[str] = None):
        self.message = message
        if error_type is not None:
            self.error_type = error_type
        super().__init__(message)


class DomainError(LadderLabError):
    error_type = "domain"


class SieveLimitError(LadderLabError):
    error_type = "sieve_limit"


class IncompleteZeroEnumerationError(LadderLabError):
    error_type = "incomplete_zeros"


class ToleranceUnreachableError(LadderLabError):
    error_type = "tolerance"


class SingularityError(LadderLabError):
    error_type = "singularity"


class BracketError(LadderLabError):
    """Root bracket without a sign change; keeps the residuals at both ends."""

    error_type = "bracket"

    def __init__(self, message: str, lo_residual: float = float("nan"), hi_residual: float = float("nan")):
        self.lo_residual = lo_residual
        self.hi_residual = hi_residual
        super().__init__(message)


class NonMonotoneResidualError(LadderLabError):
    error_type = "non_monotone"


class ResidualError(LadderLabError):
    error_type = "residual"


class DeviationExceededError(LadderLabError):
    error_type = "deviation"


class WindowError(LadderLabError):
    error_type = "window"


class NoSignChangeError(LadderLabError):
    error_type = "no_sign_change"


class CrossingNotFoundError(LadderLabError):
    error_type = "crossing"


class SignViolationError(LadderLabError):
    error_type = "sign"


class CacheFormatError(LadderLabError):
    error_type = "cache"
