"""Procedurally generated attribute datasets with known ground truth.

Every image holds one figure with a sampled color, shape and pattern, drawn over a gray background which gets
noisier and more crowded with distractor shapes as the clutter level rises. Distractors never touch the
figure's bounding box.
"""
from __future__ import annotations

from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from itertools import chain

import numpy as np
from loguru import logger
from PIL import Image, ImageDraw
from pydantic import Field, field_validator, model_validator
from typing_extensions import Self

from attrnet.consts import AttributeGroup, LabelScheme, Split
from attrnet.data.records import AttributeSchema, BBox, DatasetRecord
from attrnet.generic.models import AttrNetModel
from attrnet.utils import seed_to_int, substream

DEFAULT_PALETTE: dict[str, tuple[int, int, int]] = {
    "red": (220, 40, 40),
    "green": (40, 170, 60),
    "blue": (40, 70, 220),
    "yellow": (235, 215, 40),
    "white": (245, 245, 245),
    "black": (20, 20, 20),
}
KNOWN_SHAPES = ("round", "rectangular", "square", "long")
KNOWN_PATTERNS = ("striped", "spotted", "plain")
NO_PATTERN = "plain"

MAX_DISTRACTORS = 12
MAX_NOISE_STD = 40.0


def rgb_distance(a: tuple[int, int, int], b: tuple[int, int, int]) -> float:
    return float(np.linalg.norm(np.subtract(a, b, dtype=np.float64)))


class SyntheticConfig(AttrNetModel):
    """How to generate a synthetic attribute dataset."""

    train_count: int = Field(default=2000, ge=0)
    val_count: int = Field(default=300, ge=0)
    test_count: int = Field(default=500, ge=0)
    image_size: int = Field(default=64, ge=16)
    palette: dict[str, tuple[int, int, int]] = Field(default_factory=lambda: dict(DEFAULT_PALETTE))
    """Color name to RGB; each color becomes a class of the `color` group."""
    shapes: tuple[str, ...] = KNOWN_SHAPES
    patterns: tuple[str, ...] = KNOWN_PATTERNS
    """`plain` may be sampled but is not a class: it means no pattern label is positive."""
    background: tuple[int, int, int] = (128, 128, 128)
    clutter: float = Field(default=0.3, ge=0, le=1)
    """0 gives a uniform background; 1 gives the strongest noise and the most distractors."""
    ambiguity_rate: float = Field(default=0.0, ge=0, le=1)
    """Probability that any single label is replaced by the ambiguous value 0."""
    min_color_distance: float = Field(default=60.0, ge=0)
    seed: int | str = 0

    @field_validator("palette")
    @classmethod
    def palette_not_empty(cls, value: dict[str, tuple[int, int, int]]) -> dict[str, tuple[int, int, int]]:
        if not value:
            raise ValueError("the palette must hold at least one color")
        for name, rgb in value.items():
            if any(not 0 <= channel <= 255 for channel in rgb):
                raise ValueError(f"color {name} has channels outside 0..255: {rgb}")
        return value

    @field_validator("shapes")
    @classmethod
    def known_shapes(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if not value:
            raise ValueError("the shape set must not be empty")
        unknown = set(value) - set(KNOWN_SHAPES)
        if unknown or len(set(value)) != len(value):
            raise ValueError(f"shapes must be distinct members of {KNOWN_SHAPES}, got {value}")
        return value

    @field_validator("patterns")
    @classmethod
    def known_patterns(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if not value:
            raise ValueError("the pattern set must not be empty (use ('plain',) for no patterns)")
        unknown = set(value) - set(KNOWN_PATTERNS)
        if unknown or len(set(value)) != len(value):
            raise ValueError(f"patterns must be distinct members of {KNOWN_PATTERNS}, got {value}")
        return value

    @model_validator(mode="after")
    def distinguishable_colors(self) -> Self:
        colors = [*self.palette.items(), ("background", self.background)]
        for i, (name_a, rgb_a) in enumerate(colors):
            for name_b, rgb_b in colors[i + 1 :]:
                if rgb_distance(rgb_a, rgb_b) < self.min_color_distance:
                    raise ValueError(
                        f"colors {name_a} and {name_b} are closer than {self.min_color_distance} in RGB space",
                    )
        overlap = set(self.palette) & (set(self.shapes) | set(self.patterns))
        if overlap:
            raise ValueError(f"class names must be unique, {sorted(overlap)} is both a color and a shape/pattern")
        return self

    def counts(self) -> dict[Split, int]:
        return {Split.train: self.train_count, Split.val: self.val_count, Split.test: self.test_count}

    def schema(self) -> AttributeSchema:
        """The classes: every palette color, every shape, and every pattern except `plain`."""
        return AttributeSchema.from_groups(
            {
                AttributeGroup.color: tuple(self.palette),
                AttributeGroup.shape: self.shapes,
                AttributeGroup.pattern: tuple(pattern for pattern in self.patterns if pattern != NO_PATTERN),
            },
            LabelScheme.ternary,
        )


def _figure_size(shape: str, size: int, rng: np.random.Generator) -> tuple[int, int]:
    """Return (width, height) of a figure of `shape` in a `size` square image."""
    if shape in ("round", "square"):
        side = int(rng.integers(int(size * 0.3), int(size * 0.5) + 1))
        return side, side
    if shape == "rectangular":
        long_side = int(rng.integers(int(size * 0.4), int(size * 0.6) + 1))
        short_side = max(4, round(long_side / rng.uniform(1.5, 1.9)))
    else:
        long_side = int(rng.integers(int(size * 0.55), int(size * 0.8) + 1))
        short_side = max(3, round(long_side / rng.uniform(3.5, 4.5)))
    return (long_side, short_side) if rng.random() < 0.5 else (short_side, long_side)


def _figure_mask(shape: str, size: int, rng: np.random.Generator) -> Image.Image:
    width, height = _figure_size(shape, size, rng)
    margin = max(1, size // 16)
    x0 = int(rng.integers(margin, size - margin - width + 1))
    y0 = int(rng.integers(margin, size - margin - height + 1))
    mask = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(mask)
    box = (x0, y0, x0 + width - 1, y0 + height - 1)
    if shape == "round":
        draw.ellipse(box, fill=255)
    else:
        draw.rectangle(box, fill=255)
    return mask


def _pattern_ink(pattern: str, size: int, bbox: BBox, rng: np.random.Generator) -> np.ndarray:
    """Return a boolean `[size,size]` mask of pattern pixels; it covers well under half of any figure."""
    ys, xs = np.mgrid[0:size, 0:size]
    period = int(rng.integers(6, 9))
    phase = int(rng.integers(0, period))
    if pattern == "striped":
        # stripes cross the long axis so thin figures keep their fill as the majority
        coordinate = xs if bbox.width >= bbox.height else ys
        return (coordinate + phase) % period < 2
    if pattern == "spotted":
        return ((ys + phase) % period < 2) & ((xs + phase) % period < 2)
    return np.zeros((size, size), dtype=bool)


def _ink_color(fill: tuple[int, int, int]) -> np.ndarray:
    """A shade of `fill`: darker for bright fills, lighter for dark ones."""
    rgb = np.asarray(fill, dtype=np.float64)
    if rgb.mean() > 80:
        return np.round(rgb * 0.55)
    return np.minimum(rgb + 90, 255)


def _draw_distractors(
    canvas: Image.Image,
    config: SyntheticConfig,
    keep_clear: BBox,
    rng: np.random.Generator,
) -> None:
    count = round(config.clutter * MAX_DISTRACTORS)
    draw = ImageDraw.Draw(canvas)
    size = config.image_size
    colors = list(config.palette.values())
    for _ in range(count):
        for _attempt in range(20):
            side = int(rng.integers(max(2, size // 16), max(3, size // 6) + 1))
            x0 = int(rng.integers(0, size - side + 1))
            y0 = int(rng.integers(0, size - side + 1))
            clear_x = x0 + side <= keep_clear.x0 or x0 >= keep_clear.x1
            clear = clear_x or y0 + side <= keep_clear.y0 or y0 >= keep_clear.y1
            if clear:
                color = colors[int(rng.integers(len(colors)))]
                box = (x0, y0, x0 + side - 1, y0 + side - 1)
                if rng.random() < 0.5:
                    draw.ellipse(box, fill=color)
                else:
                    draw.rectangle(box, fill=color)
                break


def _sample_labels(
    config: SyntheticConfig,
    schema: AttributeSchema,
    color: str,
    shape: str,
    pattern: str,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    positives = {color, shape, pattern}
    labels = np.array([1 if name in positives else -1 for name in schema.class_names], dtype=np.int64)
    if config.ambiguity_rate > 0:
        labels[rng.random(len(labels)) < config.ambiguity_rate] = 0
    return tuple(int(label) for label in labels)


def generate_record(config: SyntheticConfig, schema: AttributeSchema, image_id: str, split: Split) -> DatasetRecord:
    """Generate one record. The result depends only on the config, the seed and `image_id`."""
    rng = substream(seed_to_int(config.seed), image_id)
    color = list(config.palette)[int(rng.integers(len(config.palette)))]
    shape = config.shapes[int(rng.integers(len(config.shapes)))]
    pattern = config.patterns[int(rng.integers(len(config.patterns)))]
    size = config.image_size

    figure = np.asarray(_figure_mask(shape, size, rng), dtype=np.uint8) > 0
    ys, xs = np.nonzero(figure)
    bbox = BBox(x0=int(xs.min()), y0=int(ys.min()), x1=int(xs.max()) + 1, y1=int(ys.max()) + 1)

    canvas = Image.new("RGB", (size, size), config.background)
    if config.clutter > 0:
        _draw_distractors(canvas, config, bbox, rng)
    pixels = np.asarray(canvas, dtype=np.float64).copy()
    if config.clutter > 0:
        noise = rng.normal(0.0, config.clutter * MAX_NOISE_STD, size=pixels.shape)
        pixels = np.where(figure[..., np.newaxis], pixels, pixels + noise)

    pixels[figure] = config.palette[color]
    ink = _pattern_ink(pattern, size, bbox, rng) & figure
    pixels[ink] = _ink_color(config.palette[color])

    return DatasetRecord(
        image_id=image_id,
        pixels=np.clip(np.round(pixels), 0, 255).astype(np.uint8),
        bbox=bbox,
        labels=_sample_labels(config, schema, color, shape, pattern, rng),
        split=split,
    )


def _image_ids(config: SyntheticConfig) -> Iterator[tuple[str, Split]]:
    return chain.from_iterable(
        ((f"{split}_{index:05d}", split) for index in range(count)) for split, count in config.counts().items()
    )


def generate_synthetic(
    config: SyntheticConfig,
    *,
    max_workers: int | None = None,
) -> tuple[list[DatasetRecord], AttributeSchema]:
    """Generate every record of every split.

    Args:
        config (SyntheticConfig): What to generate.
        max_workers (int | None, optional): Threads used for rendering. The output does not depend on it.

    Returns:
        tuple[list[DatasetRecord], AttributeSchema]: Records ordered train, val, test and by index; the schema.
    """
    schema = config.schema()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        records = list(pool.map(lambda item: generate_record(config, schema, *item), _image_ids(config)))
    logger.info(
        f"generated {len(records)} synthetic records "
        f"({', '.join(f'{split}={count}' for split, count in config.counts().items())}) "
        f"with {schema.num_classes} classes",
    )
    return records, schema


def nearest_palette_color(rgb: np.ndarray | tuple[int, int, int], palette: dict[str, tuple[int, int, int]]) -> str:
    """Return the palette color closest to `rgb`."""
    color = (int(rgb[0]), int(rgb[1]), int(rgb[2]))
    return min(palette, key=lambda name: rgb_distance(color, palette[name]))


__all__ = [
    "SyntheticConfig",
    "DEFAULT_PALETTE",
    "generate_synthetic",
    "generate_record",
    "nearest_palette_color",
]
