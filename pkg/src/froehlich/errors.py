"""Exception hierarchy. Each class carries the category label the CLI reports."""


class FroehlichError(Exception):
    category = "error"
    exit_code = 1


class DomainError(FroehlichError, ValueError):
    """Input lies outside the region where a formula is defined."""

    category = "domain-error"
    exit_code = 4


class UsageError(FroehlichError, ValueError):
    """Caller passed an inconsistent or malformed request."""

    category = "usage-error"
    exit_code = 3


class ConfigError(FroehlichError, ValueError):
    category = "config-error"
    exit_code = 2


class MissingParameterError(ConfigError):
    category = "missing-parameter"
    exit_code = 5


class RangeError(ConfigError):
    """A configured value parsed but lies outside its allowed range."""

    category = "range-error"
    exit_code = 6
