"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid run configuration or incompatible component settings."""


class DataError(ValueError):
    """Malformed or inconsistent input data.

    Carries an optional file path and 1-based line number so loader errors
    point at the offending record.
    """

    def __init__(self, message: str, *, path=None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None and line is not None:
            prefix = f"{path}:{line}: "
        elif path is not None:
            prefix = f"{path}: "
        super().__init__(prefix + message)


class NumericError(RuntimeError):
    """Non-finite loss or other numeric failure during training."""
