"""Raw label handling: mapping to training targets and merging classes."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from attrnet.consts import LabelScheme
from attrnet.data.records import AttributeSchema, DatasetRecord
from attrnet.errors import ConfigMismatchError, ParameterError

_TERNARY_TARGETS = {-1: 0.0, 0: 0.5, 1: 1.0}


def map_labels(raw: Sequence[int] | np.ndarray, scheme: LabelScheme = LabelScheme.ternary) -> np.ndarray:
    """Map raw labels to training targets.

    Ternary labels map -1 to 0, 0 (ambiguous) to 0.5 and +1 to 1. Binary labels pass through as 0 and 1.
    Works on a single label vector or a `[B,N]` matrix.

    Raises:
        ParameterError: If a value is outside the scheme's domain.
    """
    values = np.asarray(raw)
    allowed = (-1, 0, 1) if scheme == LabelScheme.ternary else (0, 1)
    bad = ~np.isin(values, allowed)
    if bad.any():
        raise ParameterError(f"{scheme} labels must be in {allowed}, got {sorted(set(values[bad].tolist()))}")
    if scheme == LabelScheme.binary:
        return values.astype(np.float64)
    return (values.astype(np.float64) + 1.0) / 2.0


def target_matrix(records: Sequence[DatasetRecord], scheme: LabelScheme) -> np.ndarray:
    """Return the `[B,N]` training targets of `records`."""
    return map_labels(np.array([record.labels for record in records], dtype=np.int64), scheme)


def merge_classes(
    records: Sequence[DatasetRecord],
    schema: AttributeSchema,
    mapping: dict[str, Sequence[str]],
) -> tuple[list[DatasetRecord], AttributeSchema]:
    """Merge groups of source classes into single target classes.

    Each target takes the per-record maximum of its sources' raw labels and replaces the first source in both
    the class order and its group; the other sources disappear. Classes not mentioned are kept as they are.

    Args:
        records (Sequence[DatasetRecord]): Records labelled under `schema`.
        schema (AttributeSchema): The source schema.
        mapping (dict[str, Sequence[str]]): Target class name to the source classes it replaces.

    Raises:
        ConfigMismatchError: If a source is unknown or claimed by two targets.

    Returns:
        tuple[list[DatasetRecord], AttributeSchema]: The relabelled records and the merged schema.
    """
    claimed: dict[str, str] = {}
    for target, sources in mapping.items():
        if not sources:
            raise ConfigMismatchError(f"merge target {target!r} has no source classes")
        for source in sources:
            schema.index_of(source)
            if source in claimed:
                raise ConfigMismatchError(f"class {source!r} is merged into both {claimed[source]!r} and {target!r}")
            claimed[source] = target

    new_names: list[str] = []
    columns: list[list[int]] = []
    for name in schema.class_names:
        target = claimed.get(name)
        if target is None:
            new_names.append(name)
            columns.append([schema.index_of(name)])
        elif mapping[target][0] == name:
            new_names.append(target)
            columns.append([schema.index_of(source) for source in mapping[target]])

    new_groups = {
        group: tuple(
            claimed.get(name, name)
            for name in members
            if name not in claimed or mapping[claimed[name]][0] == name
        )
        for group, members in schema.groups.items()
    }
    merged_schema = AttributeSchema(
        class_names=tuple(new_names),
        groups={group: members for group, members in new_groups.items() if members},
        label_scheme=schema.label_scheme,
    )
    merged_records = [
        record.model_copy(update={"labels": tuple(max(record.labels[i] for i in column) for column in columns)})
        for record in records
    ]
    return merged_records, merged_schema


__all__ = [
    "map_labels",
    "target_matrix",
    "merge_classes",
]
