"""The exception hierarchy raised by attrnet.

Every error carries the exit code the command line interface reports for it.
"""
from __future__ import annotations

from attrnet.consts import ExitCode


class AttrNetError(Exception):
    """Base class for every error raised deliberately by attrnet."""

    exit_code: ExitCode = ExitCode.CONFIG


class ConfigError(AttrNetError, ValueError):
    """A configuration value is invalid or inconsistent."""


class ParameterError(ConfigError):
    """An operation received a parameter outside its domain."""


class ConfigMismatchError(ConfigError):
    """Two configurations which must agree (such as a checkpoint and a model) do not."""


class UnsupportedVersionError(ConfigError):
    """A checkpoint was written with a format version this library cannot read."""


class DimensionError(AttrNetError, ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class ContractError(AttrNetError, RuntimeError):
    """An API was used outside of its contract."""


class PreconditionError(AttrNetError, ValueError):
    """An input lacks something the operation requires, such as a bounding box."""


class UndefinedMetricError(AttrNetError, ValueError):
    """A metric is undefined for the given input (no positives, or a single class)."""


class NumericError(AttrNetError, ArithmeticError):
    """A NaN or infinite value was produced or consumed."""

    exit_code = ExitCode.NUMERIC

    def __init__(self, message: str, *, batch_index: int | None = None) -> None:
        """Create a numeric error, optionally tagged with the batch it occurred in."""
        self.batch_index = batch_index
        if batch_index is not None:
            message = f"{message} (batch {batch_index})"
        super().__init__(message)

    def with_batch(self, batch_index: int) -> NumericError:
        """Return a copy of this error tagged with `batch_index`."""
        return NumericError(str(self), batch_index=batch_index)


class DataError(AttrNetError):
    """Reading or writing data failed."""

    exit_code = ExitCode.IO


class ImageReadError(DataError):
    """An image file is missing or cannot be decoded."""


class CorruptCheckpointError(DataError):
    """A checkpoint file is truncated or malformed."""


class ManifestError(DataError):
    """A manifest row (or its header) is malformed."""

    def __init__(self, message: str, *, row: int) -> None:
        """Create an error addressed to `row` (1-based, the header being row 1)."""
        self.row = row
        super().__init__(f"manifest row {row}: {message}")
