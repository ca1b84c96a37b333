"""Exception types shared across the package.

Each class carries the exit code the command-line front end maps it to
(0 success, 1 usage, 2 data error, 3 numeric failure).
"""


class ComphypError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class InvalidArgumentError(ComphypError, ValueError):
    """A parameter is outside its documented domain (usage-level mistake)."""

    exit_code = 1


class InvalidDataError(ComphypError, ValueError):
    """Input data violates a contract (NaN, out-of-range value, duplicate id)."""

    exit_code = 2


class ParseError(InvalidDataError):
    """A file could not be parsed; the message names the offending line."""

    exit_code = 2


class DegenerateDataError(InvalidDataError):
    """Data admits no meaningful estimate (e.g. zero-variance sample)."""

    exit_code = 2


class InvalidQueryError(ComphypError, ValueError):
    """A composed-hypothesis query is empty, vacuous, or mismatched with the fit."""

    exit_code = 2


class GenerationFailureError(ComphypError, RuntimeError):
    """A simulation generator exhausted its resampling budget."""

    exit_code = 3


class NumericError(ComphypError, RuntimeError):
    """An unexpected numerical failure inside a fitting routine."""

    exit_code = 3
