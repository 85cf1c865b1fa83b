"""Exception hierarchy shared by every hermnet module."""


class HermnetError(Exception):
    """Base class for all errors raised by hermnet."""


class DomainError(HermnetError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class StructuralError(HermnetError, ValueError):
    """Shapes, widths or graph structure are inconsistent."""


class NumericError(HermnetError, ArithmeticError):
    """A NaN or infinity appeared where finite values are required."""

    def __init__(self, message, op=None, index=None):
        super().__init__(message)
        self.op = op
        self.index = index


class InvariantError(HermnetError, ValueError):
    """A documented invariant (e.g. rows on the simplex) does not hold."""


class FormatError(HermnetError, ValueError):
    """A binary or text file does not follow its declared format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(HermnetError, ValueError):
    """A run configuration is invalid or refers to missing inputs."""
