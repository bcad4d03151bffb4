"""Reading and writing 8-bit RGB images (PNG and binary PPM)."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from attrnet.errors import ImageReadError, ParameterError
from attrnet.utils import atomic_write_bytes

_FORMATS_BY_SUFFIX = {".png": "PNG", ".ppm": "PPM"}


def read_image(path: Path | str) -> np.ndarray:
    """Return the image at `path` as an `[H,W,3]` uint8 RGB array.

    Raises:
        ImageReadError: If the file is missing or cannot be decoded.
    """
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
    except FileNotFoundError as e:
        raise ImageReadError(f"image {path} does not exist") from e
    except (UnidentifiedImageError, OSError) as e:
        raise ImageReadError(f"cannot decode image {path}: {e}") from e


def image_format_for(path: Path | str) -> str:
    """Return the Pillow format name implied by the suffix of `path`."""
    suffix = Path(path).suffix.lower()
    if suffix not in _FORMATS_BY_SUFFIX:
        raise ParameterError(f"unsupported image suffix {suffix!r}; use one of {sorted(_FORMATS_BY_SUFFIX)}")
    return _FORMATS_BY_SUFFIX[suffix]


def encode_image(pixels: np.ndarray, image_format: str) -> bytes:
    """Encode an `[H,W,3]` uint8 array (or `[H,W]` for grayscale) in `image_format`."""
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(buffer, format=image_format)
    return buffer.getvalue()


def write_image(path: Path | str, pixels: np.ndarray) -> None:
    """Write `pixels` atomically, as PNG or PPM according to the suffix of `path`."""
    atomic_write_bytes(Path(path), encode_image(pixels, image_format_for(path)))


__all__ = [
    "read_image",
    "write_image",
    "encode_image",
    "image_format_for",
]
