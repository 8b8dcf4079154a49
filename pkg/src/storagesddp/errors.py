"""Exception hierarchy shared across the package.

Every failure mode raised by the library derives from :class:`StorageError`,
so callers (and the CLI exit-code mapping) can catch one base class.
"""


class StorageError(Exception):
    """Base class for all errors raised by storagesddp."""


class ConfigError(StorageError):
    """Invalid or inconsistent run configuration."""


class DataError(StorageError):
    """Input data could not be ingested."""


class DegenerateInputError(StorageError):
    """Regression input carries no usable signal (zero-variance regressor)."""


class LengthMismatchError(DataError):
    """Paired series have different lengths."""


class StageOutOfRangeError(StorageError):
    """Stage index outside 1..T."""


class InvalidOrderError(StorageError):
    """Quadrature order below 1."""


class NumericalUnderflowError(StorageError):
    """A transition row lost essentially all mass; sampling density mismatched."""


class InfeasibleInputError(StorageError):
    """A trajectory violates the relaxed problem's constraints."""


class ConditionViolatedError(StorageError):
    """The bid/ask-vs-efficiency condition fails, so the relaxation may be strict."""


class OverflowGuardError(StorageError):
    """Wealth so negative that the exponential utility would overflow."""


class InfeasibleError(StorageError):
    """Stage problem has no feasible point (state outside its box)."""


class UnboundedError(StorageError):
    """Stage problem unbounded below; the cut pool is missing its floor."""


class MaxIterationsError(StorageError):
    """An iterative solve exceeded its iteration budget."""


class NotTrainedError(StorageError):
    """A policy operation was requested before any training iteration ran."""


class DomainError(StorageError):
    """Closed-form price undefined: log argument is not positive."""


class BracketInvalidError(StorageError):
    """Bisection bracket does not enclose a root."""


class MaxEvaluationsError(StorageError):
    """Bisection exceeded its evaluation budget."""


class DegenerateSampleError(StorageError):
    """Sample too small or with zero variance for density estimation."""
