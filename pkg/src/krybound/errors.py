"""Exception types shared across the package."""


class KryboundError(Exception):
    """Base class for all package-specific failures."""


class DimensionMismatchError(KryboundError, ValueError):
    pass


class SingularMatrixError(KryboundError, ArithmeticError):
    pass


class NumericalFailureError(KryboundError, ArithmeticError):
    """An iteration diverged, stagnated, or produced non-finite values."""


class RangeError(KryboundError, ValueError):
    """Right-hand side not explained by the retained eigenvector span."""


class InapplicableError(KryboundError, ValueError):
    """A bound or estimate was requested outside its validity conditions."""


class InvalidMatrixError(KryboundError, ValueError):
    pass


class ParseError(KryboundError, ValueError):
    """Malformed input file; message carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConstructionError(KryboundError, ValueError):
    pass
