"""Exception hierarchy.

The CLI maps :class:`ValidationError` to exit code 1 and :class:`ParseError`
(like ``OSError``) to exit code 2.
"""


class PatchGraphError(Exception):
    """Base class for all package errors."""


class ValidationError(PatchGraphError, ValueError):
    """Invalid arguments, configuration or data contents."""


class ParseError(PatchGraphError, ValueError):
    """A file on disk does not follow its documented format."""


class HeaderError(ParseError):
    pass


class DimensionMismatchError(ParseError):
    pass


class DuplicateKeyError(ParseError):
    pass


class UnsupportedUpsamplingError(ValidationError):
    pass


class EmptySlideError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CheckpointMismatchError(ValidationError):
    pass


class DivergenceError(PatchGraphError, ArithmeticError):
    pass
