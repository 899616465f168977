"""Shared exception types, grouped by how the CLI reports them."""


class ConfigError(Exception):
    """Bad or inconsistent configuration."""


class DataError(Exception):
    """Malformed input data, integrity violation, or failed lookup."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class ShapeError(ValueError):
    """Operands with incompatible shapes."""
