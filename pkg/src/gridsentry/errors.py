"""Exception hierarchy shared across the package."""


class GridSentryError(Exception):
    """Base class for all package errors."""


class ValidationError(GridSentryError, ValueError):
    """Invalid configuration, hyperparameter or argument."""


class ContractError(GridSentryError, ValueError):
    """An input violated an operation's contract (shape, simplex, ordering)."""


class ComtradeError(GridSentryError, ValueError):
    """Base class for COMTRADE reading/writing failures."""


class ComtradeParseError(ComtradeError):
    """Malformed configuration file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"cfg line {line}: {message}"
        super().__init__(message)


class TruncationError(ComtradeError):
    """Data payload length disagrees with the configured sample/channel count."""


class DataError(ComtradeError):
    """Data payload contains unparsable or non-finite values."""


class ScheduleError(ValidationError):
    """Event schedule is malformed (overlaps, out of range, bad class id)."""


class EmptyDatasetError(GridSentryError, ValueError):
    """Nothing left to work with after cleaning or filtering."""


class StratificationError(ValidationError):
    """A class is too small to be represented in every partition."""
