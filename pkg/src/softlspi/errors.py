"""Exception types shared across the package.

Each maps onto one CLI exit code (see :mod:`softlspi.cli`).
"""


class SoftLspiError(Exception):
    """Base class for all package errors."""


class ConfigError(SoftLspiError, ValueError):
    """Invalid configuration: unknown world, bad parameter ranges, typos in config files."""


class ContractError(SoftLspiError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class GeometryError(SoftLspiError):
    """World geometry is degenerate (e.g. no free space to sample from)."""


class DataError(SoftLspiError):
    """Training data is malformed or contains non-finite values."""


class SolverError(SoftLspiError):
    """A linear-algebra solve or factorization failed."""
