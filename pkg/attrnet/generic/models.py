"""Data model bases applicable across all (or many) attrnet packages."""
from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict
from typing_extensions import override


class AttrNetModel(BaseModel):
    """Base class for all attrnet configurations, records and reports.

    Instances are read only; use `model_copy(update=...)` to derive a changed copy.
    """

    model_config = ConfigDict(frozen=True)

    def to_json_safe(self, *, indent: int | None = None) -> str:
        """Return the model as a JSON string, using field aliases and omitting `None` values."""
        return self.model_dump_json(by_alias=True, exclude_none=True, indent=indent)


class AttrNetArrayModel(AttrNetModel):
    """Base class for models holding numpy arrays.

    Arrays, and mappings or sequences of arrays, are excluded from JSON dumps; subclasses which need them on disk
    serialize them explicitly.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def array_exclusions(self) -> dict[str, Any]:
        """Return the `exclude` argument which leaves every array out of a dump, nested models included."""
        exclusions: dict[str, Any] = {}
        for name in type(self).model_fields:
            value = getattr(self, name)
            if _holds_arrays(value):
                exclusions[name] = True
            elif isinstance(value, AttrNetArrayModel):
                nested = value.array_exclusions()
                if nested:
                    exclusions[name] = nested
        return exclusions

    @override
    def to_json_safe(self, *, indent: int | None = None) -> str:
        return self.model_dump_json(
            by_alias=True,
            exclude_none=True,
            exclude=self.array_exclusions() or None,
            indent=indent,
        )


def _holds_arrays(value: object) -> bool:
    if isinstance(value, np.ndarray):
        return True
    if isinstance(value, dict):
        return any(isinstance(item, np.ndarray) for item in value.values())
    if isinstance(value, list | tuple):
        return any(isinstance(item, np.ndarray) for item in value)
    return False


class AttrNetMutableModel(BaseModel):
    """Base class for the few models which are updated in place, such as training state."""

    model_config = ConfigDict(arbitrary_types_allowed=True, validate_assignment=True)


def arrays_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    """Return True if both arrays are None, or have identical shape, dtype and bytes."""
    if a is None or b is None:
        return a is b
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


__all__ = [
    "AttrNetModel",
    "AttrNetArrayModel",
    "AttrNetMutableModel",
    "arrays_equal",
]
