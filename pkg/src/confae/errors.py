"""Exception taxonomy shared across the package (CLI maps these to exit codes)."""


class ConfaeError(Exception):
    """Base class for package errors."""


class ConfigError(ConfaeError):
    """Invalid configuration value, key, or file."""


class DataError(ConfaeError):
    """Dataset generation or on-disk format problem."""


class NumericFault(ConfaeError):
    """Non-finite values encountered during training or inference."""


class AcceptanceFailure(ConfaeError):
    """A reproduce run violated its preset tolerances."""
