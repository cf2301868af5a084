"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class TlaeError(Exception):
    exit_code = 1


class ConfigError(TlaeError):
    """Invalid configuration value or malformed config file."""

    exit_code = 2


class DataError(TlaeError):
    """Dataset ingestion, splitting, or length failure."""

    exit_code = 3


class ShapeError(TlaeError):
    """Operands or windows with incompatible dimensions."""

    exit_code = 4


class NumericError(TlaeError):
    """Non-finite values or numerically undefined results."""

    exit_code = 4


class MetricUndefinedError(NumericError):
    """A metric's denominator or support condition is violated."""


class OutputError(TlaeError):
    """Filesystem output failure."""

    exit_code = 5
