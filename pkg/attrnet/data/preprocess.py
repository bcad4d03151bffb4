"""Cropping, resizing, mean subtraction and augmentation of record images."""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from loguru import logger

from attrnet.consts import DEFAULT_BBOX_MARGIN, AugmentMode
from attrnet.data.records import BBox, DatasetRecord
from attrnet.errors import DimensionError, ParameterError, PreconditionError
from attrnet.generic.models import AttrNetArrayModel
from attrnet.tensor import Tensor

_EDGE_TOLERANCE = 1e-9


def margin_window(bbox: BBox, width: int, height: int, margin: float = DEFAULT_BBOX_MARGIN) -> BBox:
    """Grow `bbox` by `margin` of its width on the left and right and of its height on the top and bottom,
    then clamp it to a `width` x `height` image. The result always contains `bbox`.
    """
    if margin < 0:
        raise ParameterError(f"margin must be >= 0, got {margin}")
    grow_x = margin * bbox.width
    grow_y = margin * bbox.height
    return BBox(
        x0=max(0, math.floor(bbox.x0 - grow_x + _EDGE_TOLERANCE)),
        y0=max(0, math.floor(bbox.y0 - grow_y + _EDGE_TOLERANCE)),
        x1=min(width, math.ceil(bbox.x1 + grow_x - _EDGE_TOLERANCE)),
        y1=min(height, math.ceil(bbox.y1 + grow_y - _EDGE_TOLERANCE)),
    )


def crop_bbox_margin(record: DatasetRecord, margin: float = DEFAULT_BBOX_MARGIN) -> np.ndarray:
    """Return the record's pixels cropped to its bbox grown by `margin`.

    Raises:
        PreconditionError: If the record has no bbox.
    """
    if record.bbox is None:
        raise PreconditionError(f"record {record.image_id} has no bounding box")
    window = margin_window(record.bbox, record.width, record.height, margin)
    return record.pixels[window.y0 : window.y1, window.x0 : window.x1]


def record_view(
    record: DatasetRecord,
    crop_bbox: bool,
    margin: float = DEFAULT_BBOX_MARGIN,
) -> tuple[np.ndarray, bool]:
    """Return the pixels a record contributes, and whether a requested bbox crop fell back to the whole image."""
    if crop_bbox and record.bbox is not None:
        return crop_bbox_margin(record, margin), False
    return record.pixels, crop_bbox


def _sample_positions(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    centers = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    centers = np.clip(centers, 0, in_size - 1)
    low = np.floor(centers).astype(np.int64)
    high = np.minimum(low + 1, in_size - 1)
    return low, high, centers - low


def resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an `[H,W,C]` image with half-pixel centers and clamped edges, in float64."""
    if pixels.shape[0] == 0 or pixels.shape[1] == 0:
        raise DimensionError(f"cannot resize a zero-area image {pixels.shape}")
    image = pixels.astype(np.float64)
    y_low, y_high, y_frac = _sample_positions(image.shape[0], height)
    x_low, x_high, x_frac = _sample_positions(image.shape[1], width)
    rows = image[y_low] * (1 - y_frac)[:, None, None] + image[y_high] * y_frac[:, None, None]
    return rows[:, x_low] * (1 - x_frac)[None, :, None] + rows[:, x_high] * x_frac[None, :, None]


def preprocess_array(pixels: np.ndarray, canonical: int, mean_rgb: Sequence[float]) -> np.ndarray:
    """Resize to `canonical` x `canonical`, subtract `mean_rgb`, and return a `[3,canonical,canonical]` array."""
    if canonical < 1:
        raise ParameterError(f"canonical size must be positive, got {canonical}")
    resized = resize_bilinear(pixels, canonical, canonical)
    return (resized - np.asarray(mean_rgb, dtype=np.float64)).transpose(2, 0, 1)


def preprocess(pixels: np.ndarray, canonical: int, mean_rgb: Sequence[float]) -> Tensor:
    """Turn `[H,W,3]` uint8 pixels into the network's input layout, `[3,canonical,canonical]`.

    Values are `pixel - mean_rgb` with no further scaling.

    Raises:
        DimensionError: If the image has zero area.
        ParameterError: If `canonical < 1`.
    """
    return Tensor(preprocess_array(pixels, canonical, mean_rgb))


def hflip(image: np.ndarray) -> np.ndarray:
    """Mirror a `[C,H,W]` array left to right."""
    return image[..., ::-1].copy()


def crop_offsets(
    size: tuple[int, int],
    crop: int,
    mode: AugmentMode,
    rng: np.random.Generator,
) -> tuple[int, int, bool]:
    """Return `(top, left, flip)` for a `crop` x `crop` patch of a `size` = (H, W) image."""
    height, width = size
    if crop < 1 or crop > min(height, width):
        raise ParameterError(f"crop {crop} must be between 1 and the input size {height}x{width}")
    if mode == AugmentMode.eval:
        return (height - crop) // 2, (width - crop) // 2, False
    top = int(rng.integers(0, height - crop + 1))
    left = int(rng.integers(0, width - crop + 1))
    return top, left, bool(rng.random() < 0.5)


def augment_array(image: np.ndarray, crop: int, mode: AugmentMode, rng: np.random.Generator) -> np.ndarray:
    top, left, flip = crop_offsets(image.shape[-2:], crop, mode, rng)
    patch = image[..., top : top + crop, left : left + crop]
    return hflip(patch) if flip else patch.copy()


def augment(image: Tensor, crop: int, mode: AugmentMode, rng: np.random.Generator) -> Tensor:
    """Cut a `crop` x `crop` patch out of a `[3,H,W]` image.

    In train mode the patch offset is uniform over every position that fits, and the patch is mirrored with
    probability 0.5. In eval mode the patch is centered and never mirrored; `rng` is not consumed.

    Raises:
        ParameterError: If `crop` exceeds the image.
    """
    return Tensor(augment_array(image.data, crop, mode, rng), dtype=image.dtype)


def compute_mean_rgb(images: Iterable[np.ndarray]) -> tuple[float, float, float]:
    """Return the per-channel mean over every pixel of every `[H,W,3]` image, each pixel weighted equally.

    Raises:
        ParameterError: If there are no images.
    """
    totals = np.zeros(3, dtype=np.float64)
    count = 0
    for image in images:
        totals += image.reshape(-1, 3).sum(axis=0, dtype=np.float64)
        count += image.shape[0] * image.shape[1]
    if count == 0:
        raise ParameterError("cannot compute a mean RGB over no training images")
    mean = totals / count
    return float(mean[0]), float(mean[1]), float(mean[2])


def training_mean_rgb(records: Sequence[DatasetRecord], crop_bbox: bool) -> tuple[float, float, float]:
    """The mean RGB of the training records, over the same (possibly cropped) pixels training consumes."""
    return compute_mean_rgb(record_view(record, crop_bbox)[0] for record in records)


class PreparedSplit(AttrNetArrayModel):
    """A split preprocessed into one stacked array, ready for batching and augmentation."""

    images: np.ndarray
    """`[B,3,canonical,canonical]` float32."""
    raw_labels: np.ndarray
    """`[B,N]` int8 raw labels."""
    image_ids: tuple[str, ...]
    fallback_count: int = 0
    """Records which had no bbox although cropping was requested, and were used whole."""

    def __len__(self) -> int:
        return len(self.image_ids)


def prepare_views(
    records: Sequence[DatasetRecord],
    *,
    crop_bbox: bool,
    canonical: int,
    mean_rgb: Sequence[float],
    max_workers: int | None = None,
) -> PreparedSplit:
    """Crop (optionally), resize and mean-subtract every record, in parallel threads, keeping record order."""

    def view(record: DatasetRecord) -> tuple[np.ndarray, bool]:
        pixels, fell_back = record_view(record, crop_bbox)
        return preprocess_array(pixels, canonical, mean_rgb).astype(np.float32), fell_back

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(view, records))
    fallback_count = sum(fell_back for _, fell_back in results)
    if fallback_count:
        logger.warning(f"{fallback_count} of {len(records)} records have no bbox and were used as whole images")
    num_classes = len(records[0].labels) if records else 0
    return PreparedSplit(
        images=(
            np.stack([image for image, _ in results])
            if results
            else np.zeros((0, 3, canonical, canonical), dtype=np.float32)
        ),
        raw_labels=np.array([record.labels for record in records], dtype=np.int8).reshape(len(records), num_classes),
        image_ids=tuple(record.image_id for record in records),
        fallback_count=fallback_count,
    )


__all__ = [
    "margin_window",
    "crop_bbox_margin",
    "record_view",
    "resize_bilinear",
    "preprocess",
    "preprocess_array",
    "hflip",
    "augment",
    "augment_array",
    "crop_offsets",
    "compute_mean_rgb",
    "training_mean_rgb",
    "PreparedSplit",
    "prepare_views",
]
