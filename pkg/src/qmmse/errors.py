"""Semantic exception hierarchy shared by all qmmse modules."""


class QmmseError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(QmmseError, ValueError):
    """An argument violates its contract (shape, finiteness, range)."""


class DomainError(QmmseError, ValueError):
    """A point lies outside the support the operation is defined on."""


class NumericalDegeneracyError(QmmseError, FloatingPointError):
    """A computation lost all significance even after stabilization."""


class ConvergenceError(QmmseError, RuntimeError):
    """An iterative routine hit its iteration cap before converging.

    Carries the last iterate so callers can inspect or resume.
    """

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class QuantileInversionError(QmmseError, ValueError):
    """A density's quantile function could not be inverted."""


class CoveringAuditError(QmmseError, RuntimeError):
    """A randomized covering audit found an uncovered point.

    Indicates a construction bug; never expected for the shipped builder.
    """


class ConfigError(QmmseError, ValueError):
    """A configuration file or mapping violates the documented schema."""
