"""Dataset records, bounding boxes and attribute schemas."""
from __future__ import annotations

from collections.abc import Iterable

import numpy as np
from pydantic import Field, field_validator, model_validator
from typing_extensions import Self

from attrnet.consts import AttributeGroup, LabelScheme, Split
from attrnet.errors import ConfigMismatchError
from attrnet.generic.models import AttrNetArrayModel, AttrNetModel, arrays_equal


class BBox(AttrNetModel):
    """A half-open pixel rectangle `[x0, x1) x [y0, y1)`."""

    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    x1: int
    y1: int

    @model_validator(mode="after")
    def positive_area(self) -> Self:
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"bbox must have positive area, got ({self.x0},{self.y0},{self.x1},{self.y1})")
        return self

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, other: BBox) -> bool:
        return self.x0 <= other.x0 and self.y0 <= other.y0 and self.x1 >= other.x1 and self.y1 >= other.y1


class DatasetRecord(AttrNetArrayModel):
    """One annotated image."""

    image_id: str = Field(min_length=1)
    pixels: np.ndarray
    """`[H,W,3]` uint8, RGB."""
    bbox: BBox | None = None
    """The object's bounding box, if annotated."""
    labels: tuple[int, ...]
    """Raw labels, one per schema class: {-1, 0, +1} or, for binary datasets, {0, 1}."""
    split: Split

    @field_validator("pixels")
    @classmethod
    def rgb_bytes(cls, value: np.ndarray) -> np.ndarray:
        if value.dtype != np.uint8 or value.ndim != 3 or value.shape[2] != 3:
            raise ValueError(f"pixels must be an [H,W,3] uint8 array, got {value.shape} {value.dtype}")
        if value.shape[0] == 0 or value.shape[1] == 0:
            raise ValueError("pixels must have positive area")
        return value

    @field_validator("labels")
    @classmethod
    def raw_label_domain(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        bad = sorted({label for label in value if label not in (-1, 0, 1)})
        if bad:
            raise ValueError(f"raw labels must be in {{-1, 0, 1}}, got {bad}")
        return value

    @model_validator(mode="after")
    def bbox_inside_image(self) -> Self:
        if self.bbox is not None and (self.bbox.x1 > self.width or self.bbox.y1 > self.height):
            raise ValueError(f"bbox {self.bbox.as_tuple()} exceeds the {self.width}x{self.height} image")
        return self

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def same_as(self, other: DatasetRecord) -> bool:
        """Return True if every field, pixels included, is identical."""
        return (
            self.image_id == other.image_id
            and self.bbox == other.bbox
            and self.labels == other.labels
            and self.split == other.split
            and arrays_equal(self.pixels, other.pixels)
        )


class AttributeSchema(AttrNetModel):
    """The ordered classes of a dataset and the attribute group of each."""

    class_names: tuple[str, ...]
    """Every class, in label-vector order."""
    groups: dict[AttributeGroup, tuple[str, ...]]
    """Group to member classes, each in label-vector order."""
    label_scheme: LabelScheme = LabelScheme.ternary

    @model_validator(mode="after")
    def partition(self) -> Self:
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        grouped = [name for members in self.groups.values() for name in members]
        if sorted(grouped) != sorted(self.class_names):
            raise ValueError("every class must belong to exactly one group")
        return self

    @classmethod
    def from_groups(
        cls,
        groups: dict[AttributeGroup, Iterable[str]],
        label_scheme: LabelScheme = LabelScheme.ternary,
    ) -> AttributeSchema:
        """Build a schema whose class order is the groups' members, in the order given."""
        members = {AttributeGroup(group): tuple(names) for group, names in groups.items()}
        class_names = tuple(name for names in members.values() for name in names)
        return cls(class_names=class_names, groups=members, label_scheme=label_scheme)

    @classmethod
    def ungrouped(cls, class_names: Iterable[str], label_scheme: LabelScheme = LabelScheme.ternary) -> AttributeSchema:
        """Build a schema placing every class in the `other` group."""
        names = tuple(class_names)
        return cls(class_names=names, groups={AttributeGroup.other: names}, label_scheme=label_scheme)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def index_of(self, name: str) -> int:
        """Return the label-vector index of class `name`.

        Raises:
            ConfigMismatchError: If `name` is not a class of this schema; the message lists the valid names.
        """
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ConfigMismatchError(
                f"unknown class {name!r}; valid classes are: {', '.join(self.class_names)}",
            ) from None

    def group_of(self, name: str) -> AttributeGroup:
        for group, members in self.groups.items():
            if name in members:
                return group
        raise ConfigMismatchError(f"unknown class {name!r}")

    def group_indices(self) -> dict[AttributeGroup, list[int]]:
        """Return the label-vector indices of each non-empty group."""
        return {
            group: [self.class_names.index(name) for name in members]
            for group, members in self.groups.items()
            if members
        }

    def check_records(self, records: Iterable[DatasetRecord]) -> None:
        """Raise ConfigMismatchError if any record's label vector does not match this schema."""
        for record in records:
            if len(record.labels) != self.num_classes:
                raise ConfigMismatchError(
                    f"record {record.image_id} has {len(record.labels)} labels, schema has {self.num_classes} classes",
                )
            if self.label_scheme == LabelScheme.binary and -1 in record.labels:
                raise ConfigMismatchError(f"record {record.image_id} has label -1 in a binary dataset")


def records_of_split(records: Iterable[DatasetRecord], split: Split) -> list[DatasetRecord]:
    return [record for record in records if record.split == split]


__all__ = [
    "BBox",
    "DatasetRecord",
    "AttributeSchema",
    "records_of_split",
]
