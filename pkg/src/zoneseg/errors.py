"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numeric failures -> 3.
"""


class ZonesegError(Exception):
    """Base class for all package errors."""


class ConfigError(ZonesegError, ValueError):
    """Invalid block/model/training configuration."""


class ShapeError(ZonesegError, ValueError):
    """Tensor shape violates an operation's contract."""


class DataError(ZonesegError, ValueError):
    """Dataset file or mask content is invalid."""


class NumericError(ZonesegError, RuntimeError):
    """Non-finite value encountered during training/evaluation."""


class UsageError(ZonesegError, ValueError):
    """Bad command-line invocation."""
