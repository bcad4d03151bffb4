"""CSV manifests with an optional JSON schema sidecar.

The manifest header is `image_path,split,bbox_x0,bbox_y0,bbox_x1,bbox_y1,<class names...>`. Image paths are
relative to the manifest's directory; empty bbox cells mean the record has no bbox.
"""
from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from pathlib import Path

from loguru import logger
from pydantic import ValidationError

from attrnet.consts import MANIFEST_FILENAME, MANIFEST_FIXED_COLUMNS, SCHEMA_FILENAME, LabelScheme, Split
from attrnet.data.imageio import encode_image, read_image
from attrnet.data.records import AttributeSchema, BBox, DatasetRecord
from attrnet.errors import ConfigMismatchError, DataError, ImageReadError, ManifestError
from attrnet.utils import atomic_write_bytes, atomic_write_text

IMAGES_DIRNAME = "images"


def resolve_manifest_path(path: Path | str) -> Path:
    """Accept either a manifest file or the directory holding `manifest.csv`."""
    path = Path(path)
    return path / MANIFEST_FILENAME if path.is_dir() else path


def _parse_bbox(cells: Sequence[str], row: int) -> BBox | None:
    stripped = [cell.strip() for cell in cells]
    if not any(stripped):
        return None
    if not all(stripped):
        raise ManifestError("bbox cells must be all empty or all filled", row=row)
    try:
        x0, y0, x1, y1 = (int(cell) for cell in stripped)
        return BBox(x0=x0, y0=y0, x1=x1, y1=y1)
    except (ValueError, ValidationError) as e:
        raise ManifestError(f"invalid bbox {stripped}: {e}", row=row) from e


def _parse_labels(cells: Sequence[str], row: int) -> tuple[int, ...]:
    try:
        labels = tuple(int(cell) for cell in cells)
    except ValueError as e:
        raise ManifestError(f"label cells must be integers: {e}", row=row) from e
    bad = sorted({label for label in labels if label not in (-1, 0, 1)})
    if bad:
        raise ManifestError(f"labels must be -1, 0 or 1, got {bad}", row=row)
    return labels


def _read_schema(directory: Path, class_names: tuple[str, ...], label_rows: list[tuple[int, ...]]) -> AttributeSchema:
    sidecar = directory / SCHEMA_FILENAME
    if not sidecar.exists():
        # a file with no -1 anywhere is read as 0/1 binary data
        has_negative = any(-1 in labels for labels in label_rows)
        scheme = LabelScheme.ternary if has_negative else LabelScheme.binary
        logger.info(f"no {SCHEMA_FILENAME} next to the manifest; all classes go to group 'other', {scheme} labels")
        return AttributeSchema.ungrouped(class_names, scheme)
    try:
        schema = AttributeSchema.model_validate(json.loads(sidecar.read_text(encoding="utf-8")))
    except (ValueError, ValidationError) as e:
        raise DataError(f"invalid schema sidecar {sidecar}: {e}") from e
    if schema.class_names != class_names:
        raise ConfigMismatchError(f"{sidecar} lists classes {schema.class_names}, manifest header has {class_names}")
    return schema


def load_manifest(path: Path | str) -> tuple[list[DatasetRecord], AttributeSchema]:
    """Read a manifest, its images and its schema sidecar.

    Args:
        path (Path | str): The manifest file, or a directory holding `manifest.csv`.

    Raises:
        ManifestError: For a malformed header or row, a missing or unreadable image, a label count which differs
            from the header's class count, or a duplicate image id. The error names the row.
        ConfigMismatchError: If the schema sidecar disagrees with the header.

    Returns:
        tuple[list[DatasetRecord], AttributeSchema]: The records in file order, and the schema.
    """
    manifest_path = resolve_manifest_path(path)
    directory = manifest_path.parent
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read manifest {manifest_path}: {e}") from e

    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ManifestError("the manifest has no header", row=1)
    header = tuple(cell.strip() for cell in rows[0])
    fixed = len(MANIFEST_FIXED_COLUMNS)
    if header[:fixed] != MANIFEST_FIXED_COLUMNS:
        raise ManifestError(f"header must start with {','.join(MANIFEST_FIXED_COLUMNS)}", row=1)
    class_names = header[fixed:]
    if len(set(class_names)) != len(class_names) or not all(class_names):
        raise ManifestError("class names in the header must be unique and non-empty", row=1)

    parsed: list[tuple[int, Path, Split, BBox | None, tuple[int, ...]]] = []
    for row_number, cells in enumerate(rows[1:], start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise ManifestError(
                f"has {len(cells) - fixed} label cells, the header declares {len(class_names)} classes",
                row=row_number,
            )
        try:
            split = Split(cells[1].strip())
        except ValueError as e:
            raise ManifestError(f"unknown split {cells[1]!r}", row=row_number) from e
        bbox = _parse_bbox(cells[2:fixed], row_number)
        labels = _parse_labels(cells[fixed:], row_number)
        parsed.append((row_number, directory / cells[0].strip(), split, bbox, labels))

    schema = _read_schema(directory, class_names, [labels for *_, labels in parsed])
    records: list[DatasetRecord] = []
    seen: dict[str, int] = {}
    for row_number, image_path, split, bbox, labels in parsed:
        image_id = image_path.stem
        if image_id in seen:
            raise ManifestError(f"image id {image_id!r} already used on row {seen[image_id]}", row=row_number)
        seen[image_id] = row_number
        if schema.label_scheme == LabelScheme.binary and -1 in labels:
            raise ManifestError("label -1 in a binary dataset", row=row_number)
        try:
            pixels = read_image(image_path)
            records.append(DatasetRecord(image_id=image_id, pixels=pixels, bbox=bbox, labels=labels, split=split))
        except ImageReadError as e:
            raise ManifestError(str(e), row=row_number) from e
        except ValidationError as e:
            raise ManifestError(f"invalid record: {e}", row=row_number) from e

    logger.info(f"loaded {len(records)} records with {len(class_names)} classes from {manifest_path}")
    return records, schema


def write_manifest(records: Sequence[DatasetRecord], schema: AttributeSchema, directory: Path | str) -> Path:
    """Write `records` as PPM images plus `manifest.csv` and `schema.json` under `directory`.

    `load_manifest` on the result gives back the same records and schema.

    Returns:
        Path: The manifest file.
    """
    directory = Path(directory)
    schema.check_records(records)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([*MANIFEST_FIXED_COLUMNS, *schema.class_names])
    for record in records:
        relative = f"{IMAGES_DIRNAME}/{record.image_id}.ppm"
        atomic_write_bytes(directory / relative, encode_image(record.pixels, "PPM"))
        bbox_cells = [str(value) for value in record.bbox.as_tuple()] if record.bbox is not None else [""] * 4
        writer.writerow([relative, str(record.split), *bbox_cells, *(str(label) for label in record.labels)])

    manifest_path = directory / MANIFEST_FILENAME
    atomic_write_text(manifest_path, buffer.getvalue())
    atomic_write_text(directory / SCHEMA_FILENAME, schema.to_json_safe(indent=2) + "\n")
    logger.info(f"wrote {len(records)} records to {manifest_path}")
    return manifest_path


__all__ = [
    "load_manifest",
    "write_manifest",
    "resolve_manifest_path",
]
