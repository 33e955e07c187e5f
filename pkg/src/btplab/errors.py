"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class OutOfRangeError(InvalidInputError):
    """A query point lies outside the range an object covers."""


class CoverageError(InvalidInputError):
    """An outer path does not cover the time range a composition reads."""


class NumericalDomainError(ArithmeticError):
    """A coefficient or kernel evaluation produced a non-finite value."""


class AccuracyError(RuntimeError):
    """Quadrature failed to meet the requested tolerance.

    Carries the achieved error estimate so callers can decide whether the
    partial result is usable.
    """

    def __init__(self, message, achieved=None, requested=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class BudgetExceededError(RuntimeError):
    """A path simulation hit its step budget before the event of interest.

    Never silently truncated: the exception reports how many replicates
    were still running.
    """

    def __init__(self, message, n_unfinished=None):
        super().__init__(message)
        self.n_unfinished = n_unfinished


class InsufficientDataError(RuntimeError):
    """Too few effective samples for a statistical estimate."""

    def __init__(self, message, effective_n=None):
        super().__init__(message)
        self.effective_n = effective_n


class DegenerateStatisticsError(ValueError):
    """A z-score was requested for a zero-spread sample that misses its target."""
