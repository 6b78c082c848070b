"""Exception types raised across the toolkit."""


class CalibrationError(Exception):
    """Base class for every error raised by atscal."""


class InvalidInputError(CalibrationError, ValueError):
    """Arguments violate an operation's preconditions."""


class ParseError(InvalidInputError):
    """A logit or key=value file could not be read.

    ``line`` is the 1-based line number when the failure is tied to one row.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class UnsupportedOperationError(CalibrationError, TypeError):
    """The calibrator kind does not support the requested operation."""


class FitError(CalibrationError, RuntimeError):
    """Fitting diverged (non-finite objective or gradient)."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
