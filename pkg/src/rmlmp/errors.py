"""Exception types shared across the package."""


class RMLError(Exception):
    """Base class for all errors raised by :mod:`rmlmp`."""


class DataError(RMLError, ValueError):
    """Malformed, non-finite or out-of-range input data."""


class ShapeError(DataError):
    """Matrix dimensions that do not compose."""


class NumericalError(RMLError, ArithmeticError):
    """A solver produced (or was handed) a non-finite intermediate."""


class ModelFormatError(DataError):
    """A persisted model file failed validation."""
