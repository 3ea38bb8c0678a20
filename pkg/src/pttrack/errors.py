"""Exceptions shared across the package, mapped to CLI exit codes."""


class UsageError(Exception):
    """Bad flags or arguments (exit code 1)."""


class DataError(Exception):
    """Unreadable, malformed or mismatched inputs (exit code 2)."""


class NumericalError(Exception):
    """Non-finite values encountered mid-computation (exit code 3)."""
