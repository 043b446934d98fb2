"""Exception hierarchy shared by every stage.

The CLI maps each family onto an exit code, so raise the most specific one.
"""


class HaulcastError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HaulcastError, ValueError):
    """Invalid configuration value; the message names the offending field."""

    exit_code = 1


class DataError(HaulcastError, ValueError):
    """Malformed, inconsistent or insufficient input data."""

    exit_code = 2


class ValidationError(DataError):
    """A record violates the shift-record schema or invariants."""


class CoverageError(DataError):
    """A requested shift window is not covered by the rainfall series."""


class AlignmentError(DataError):
    """Parallel series (predictions, actuals, forecasts) disagree in length or index."""


class ModelFileError(DataError):
    """A persisted model is missing, unreadable, or of the wrong kind."""


class NumericError(HaulcastError, ArithmeticError):
    """Non-finite values or a degenerate numeric condition."""

    exit_code = 3
