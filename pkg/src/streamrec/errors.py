"""Shared exception types.

The CLI maps these onto process exit codes: usage errors exit 1,
DataError exits 2, IntegrityError exits 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class IntegrityError(RuntimeError):
    """A structural invariant of a built artifact (index, tree) is violated."""
