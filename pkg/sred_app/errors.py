"""Exception hierarchy; every class carries the process exit code used by the CLI."""


class SredError(Exception):
    exit_code = 1


class ConfigError(SredError, ValueError):
    """Invalid configuration value, unknown key or missing config/rig file."""
    exit_code = 2


class DataError(SredError, ValueError):
    """Input data is missing, unreadable or inconsistent."""
    exit_code = 3


class FormatError(DataError):
    """File exists but has the wrong bit depth, channel count or layout."""


class DimensionError(DataError):
    """Frame dimensions or channel counts do not agree."""


class NumericError(SredError, ArithmeticError):
    """Non-finite values appeared during a numerical run."""
    exit_code = 4
