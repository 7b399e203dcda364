"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration combines options that cannot work together."""


class SchemaError(ValueError):
    """A dataset file violates the line-delimited record schema."""


class UndefinedResultError(ArithmeticError):
    """A statistic is undefined for the given inputs (e.g. zero variance)."""
