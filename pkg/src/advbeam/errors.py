class ConfigError(ValueError):
    """Invalid scenario, run configuration or parameter combination."""


class DataError(ValueError):
    """Malformed, incomplete or dimensionally inconsistent data files."""


class NumericError(ArithmeticError):
    """Non-finite loss or parameters encountered during training."""
