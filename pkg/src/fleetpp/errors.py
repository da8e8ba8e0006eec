"""Exception types shared across the package."""


class DataError(ValueError):
    """Event data violates a structural or range constraint."""


class ParseError(DataError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RuntimeError):
    """A numerical operation failed (ill-conditioning, overflow)."""
