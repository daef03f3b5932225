"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid parameter or configuration value."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""
