"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (config 2, data 3, numeric 4).
"""


class NeusampleError(Exception):
    """Base class for all package errors."""


class ConfigError(NeusampleError):
    """Invalid or inconsistent run configuration."""


class DataError(NeusampleError):
    """Malformed dataset, scene spec, or checkpoint."""


class NumericalError(NeusampleError):
    """Non-finite values encountered during optimization."""
