"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes:
``ConfigError`` -> 2, ``DataError`` -> 3, ``SolverError`` -> 4.
"""


class ShakerNetError(Exception):
    """Base class for all package errors."""


class ConfigError(ShakerNetError):
    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DataError(ShakerNetError):
    pass


class MissingCell(DataError):
    pass


class DuplicateCell(DataError):
    pass


class NonNumericValue(DataError):
    pass


class WindowTooShort(DataError):
    pass


class UnknownView(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidDimensions(DataError, ValueError):
    pass


class ShapeMismatch(DataError, ValueError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class ZeroDenominator(DataError, ZeroDivisionError):
    pass


class InsufficientEntities(DataError, ValueError):
    pass


class SpectralBlowup(DataError, OverflowError):
    pass


class NonFiniteInput(DataError, ValueError):
    pass


class AsymmetricInput(DataError, ValueError):
    pass


class SolverError(ShakerNetError):
    pass


class Diverged(SolverError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SingularSystem(SolverError):
    pass


class NonOrthonormalStart(SolverError, ValueError):
    pass


class NonOrthonormal(SolverError, AssertionError):
    pass


class NegativeCash(SolverError, AssertionError):
    pass
