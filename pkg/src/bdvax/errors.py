"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ValidationError -> 3,
anything else -> 4.
"""


class BDVaxError(Exception):
    """Base class for all package errors."""


class ConfigError(BDVaxError, ValueError):
    """Bad configuration: impossible parameters, unreachable targets, etc."""


class DimensionError(ConfigError):
    """Array lengths or band counts that do not line up."""


class ValidationError(BDVaxError, ValueError):
    """Input data violates a domain invariant."""


class ParseError(ValidationError):
    """A bundle file could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class UndefinedBaselineError(BDVaxError, ZeroDivisionError):
    """A relative change was requested against a zero baseline."""
