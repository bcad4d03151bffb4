"""Rendering attention maps as image files."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from loguru import logger

from attrnet.attention.excitation import AttentionMap
from attrnet.data.imageio import image_format_for, write_image
from attrnet.errors import DimensionError
from attrnet.utils import atomic_write_text

OVERLAY_STRENGTH = 0.6
"""How far a pixel at the map's maximum is pulled from the base image toward white."""


def normalized_heat(values: np.ndarray) -> np.ndarray:
    """Scale `values` to [0, 1] by their maximum; an all-zero map stays zero."""
    peak = float(values.max()) if values.size else 0.0
    if peak <= 0:
        return np.zeros(values.shape, dtype=np.float64)
    return np.clip(values / peak, 0.0, 1.0)


def overlay_pixels(values: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Blend a `[H,W]` map into an `[H,W,3]` uint8 base image.

    Raises:
        DimensionError: If the map and the image differ in height or width.
    """
    if base.ndim != 3 or base.shape[2] != 3:
        raise DimensionError(f"base image must be [H,W,3], got {list(base.shape)}")
    if values.shape != base.shape[:2]:
        raise DimensionError(f"map is {values.shape[0]}x{values.shape[1]}, image {base.shape[0]}x{base.shape[1]}")
    heat = normalized_heat(values)[..., np.newaxis]
    lifted = base.astype(np.float64) + OVERLAY_STRENGTH * heat * (255.0 - base.astype(np.float64))
    return np.clip(np.rint(lifted), 0, 255).astype(np.uint8)


def grayscale_pixels(values: np.ndarray) -> np.ndarray:
    return np.rint(normalized_heat(values) * 255.0).astype(np.uint8)


def companion_paths(path: Path | str) -> tuple[Path, Path]:
    """Return where the grayscale map and the metadata JSON of an overlay at `path` go."""
    path = Path(path)
    return path.with_name(f"{path.stem}_map{path.suffix}"), path.with_suffix(".json")


def export_heatmap(attention_map: AttentionMap, base: np.ndarray, path: Path | str) -> tuple[Path, Path, Path]:
    """Write the overlay to `path`, the bare map next to it as `<stem>_map<suffix>`, and `<stem>.json` metadata.

    The suffix of `path` (`.png` or `.ppm`) picks the image format. Every file is written atomically.

    Returns:
        tuple[Path, Path, Path]: The overlay, grayscale and metadata paths.
    """
    path = Path(path)
    image_format_for(path)
    overlay = overlay_pixels(attention_map.values, base)
    gray_path, metadata_path = companion_paths(path)
    write_image(path, overlay)
    if path.suffix.lower() == ".ppm":
        write_image(gray_path, np.repeat(grayscale_pixels(attention_map.values)[..., np.newaxis], 3, axis=2))
    else:
        write_image(gray_path, grayscale_pixels(attention_map.values))
    atomic_write_text(metadata_path, attention_map.metadata().to_json_safe(indent=2) + "\n")
    logger.info(f"wrote attention map for class {attention_map.class_name or attention_map.class_index} to {path}")
    return path, gray_path, metadata_path


__all__ = [
    "OVERLAY_STRENGTH",
    "export_heatmap",
    "overlay_pixels",
    "grayscale_pixels",
    "normalized_heat",
    "companion_paths",
]
