"""Exception and warning classes shared across the package."""


class UQError(Exception):
    """Base class for all errors raised by uqdecouple."""


class DomainError(UQError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(UQError, ValueError):
    """Array dimensions do not match."""


class ParameterError(UQError, ValueError):
    """Invalid distribution, kernel or model parameters."""


class DecompositionError(UQError, ArithmeticError):
    """Cholesky factorization failed even after jitter escalation.

    Attributes
    ----------
    pivot : int
        Zero-based index of the first non-positive pivot.
    index : int or None
        Position of the failing matrix within a batch.
    """

    def __init__(self, message, pivot=None, index=None):
        super().__init__(message)
        self.pivot = pivot
        self.index = index


class DegenerateDataError(UQError, ValueError):
    """Sample data has zero variance where spread is required."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class InfeasibleCorrelationError(UQError, ValueError):
    """A physical-space correlation cannot be attained by the marginal pair."""


class ZeroVarianceError(UQError, ArithmeticError):
    """Model output variance is too small for sensitivity indices."""


class StageError(UQError):
    """Failure inside one stage of the composite map or a sampling loop."""

    def __init__(self, message, stage, index=None):
        super().__init__(message)
        self.stage = stage
        self.index = index


class ConfigError(UQError, ValueError):
    """Problem definition failed validation.

    Attributes
    ----------
    path : str
        Dotted path of the offending field, e.g. ``inputs.correlation``.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class IngestionError(UQError, ValueError):
    """Training data file could not be parsed."""


class JitterWarning(UserWarning):
    """Diagonal jitter was added to make a matrix positive definite."""


class RareEventWarning(UserWarning):
    """Too few hits were observed for a reliable probability estimate."""
