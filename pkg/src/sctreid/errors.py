"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and
CheckpointError -> 3, NumericError -> 4.
"""


class SctReidError(Exception):
    """Base class for all package errors."""


class ConfigError(SctReidError):
    """Bad configuration: unknown key, unparsable value, infeasible setting."""


class DataError(SctReidError):
    """Bad data: manifest violations, shape mismatches, infeasible sampling."""


class CheckpointError(SctReidError):
    """Corrupt, tampered or version-incompatible checkpoint."""


class NumericError(SctReidError):
    """Non-finite value met during training; names the offending loss term."""

    def __init__(self, term, value=None):
        self.term = term
        self.value = value
        msg = f"non-finite value in loss term '{term}'"
        if value is not None:
            msg += f" ({value})"
        super().__init__(msg)
