"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: NumericError -> 1,
ConfigError (and shape/contract violations, which indicate a bad
configuration) -> 2, DataFormatError -> 3.
"""


class VixsegError(Exception):
    """Base class for all package errors."""


class ShapeError(VixsegError):
    """Operand shapes violate an operation's contract."""


class NumericError(VixsegError):
    """A numeric invariant was violated (non-finite value, division by zero)."""


class ContractError(VixsegError):
    """An API was called outside its contract (e.g. backward on a non-scalar)."""


class ConfigError(VixsegError):
    """Invalid configuration value or unknown configuration key."""


class DataFormatError(VixsegError):
    """A file does not conform to its binary/CSV format."""


class GenerationError(VixsegError):
    """The synthetic-data generator could not satisfy its constraints."""
