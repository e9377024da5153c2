"""Exception hierarchy shared by all modules.

Each class carries the process exit code the CLI maps it to.
"""


class GILadarError(Exception):
    exit_code = 1


class ConfigError(GILadarError, ValueError):
    exit_code = 2


class FormatError(GILadarError, OSError):
    """Unreadable, truncated or malformed file."""

    exit_code = 3


class DimensionError(GILadarError, ValueError):
    exit_code = 4


class InsufficientDataError(GILadarError, ValueError):
    exit_code = 5


class ContractError(GILadarError, ValueError):
    """An input violates an operation's documented precondition."""

    exit_code = 6


class MeasurementError(GILadarError, RuntimeError):
    """A quality metric could not be extracted from the data."""

    exit_code = 7
