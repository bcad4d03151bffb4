import json
from pathlib import Path

import numpy as np
import pytest

from attrnet.attention import AttentionMap, export_heatmap, overlay_pixels
from attrnet.attention.heatmap import OVERLAY_STRENGTH, companion_paths, grayscale_pixels
from attrnet.data.imageio import read_image
from attrnet.errors import DimensionError, ParameterError


def attention_map(values: np.ndarray, lost_mass: float = 0.0) -> AttentionMap:
    return AttentionMap(
        class_index=2,
        class_name="striped",
        layer="conv1_1",
        layer_values=values,
        values=values,
        lost_mass=lost_mass,
    )


def test_zero_map_leaves_the_image_alone(rng: np.random.Generator) -> None:
    base = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    np.testing.assert_array_equal(overlay_pixels(np.zeros((5, 7)), base), base)


def test_peak_is_the_brightest_pixel() -> None:
    values = np.zeros((6, 8))
    values[3, 5] = 2.0
    values[0, 0] = 0.5
    base = np.full((6, 8, 3), 100, dtype=np.uint8)
    overlay = overlay_pixels(values, base)
    brightness = overlay.astype(int).sum(axis=2)
    assert np.unravel_index(np.argmax(brightness), brightness.shape) == (3, 5)
    assert overlay[3, 5].tolist() == [round(100 + OVERLAY_STRENGTH * 155)] * 3
    assert overlay[1, 1].tolist() == [100, 100, 100]


def test_shape_mismatch() -> None:
    with pytest.raises(DimensionError):
        overlay_pixels(np.zeros((4, 4)), np.zeros((4, 5, 3), dtype=np.uint8))
    with pytest.raises(DimensionError):
        overlay_pixels(np.zeros((4, 4)), np.zeros((4, 4), dtype=np.uint8))


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_export_round_trip(tmp_path: Path, rng: np.random.Generator, suffix: str) -> None:
    values = rng.random((12, 10)) * 0.01
    base = rng.integers(0, 256, size=(12, 10, 3), dtype=np.uint8)
    overlay_path, gray_path, metadata_path = export_heatmap(attention_map(values, 0.25), base, tmp_path / f"a{suffix}")
    assert (gray_path, metadata_path) == companion_paths(overlay_path)
    assert gray_path.name == f"a_map{suffix}"

    np.testing.assert_array_equal(read_image(overlay_path), overlay_pixels(values, base))
    gray = read_image(gray_path)[..., 0].astype(np.float64) / 255
    np.testing.assert_allclose(gray, values / values.max(), atol=1 / 255)

    metadata = json.loads(metadata_path.read_text(encoding="utf-8"))
    assert metadata["class_name"] == "striped"
    assert metadata["lost_mass_fraction"] == 0.25
    row, column = np.unravel_index(np.argmax(values), values.shape)
    assert metadata["max_location"] == [row, column]


def test_unsupported_suffix(tmp_path: Path) -> None:
    with pytest.raises(ParameterError):
        export_heatmap(attention_map(np.ones((2, 2))), np.zeros((2, 2, 3), dtype=np.uint8), tmp_path / "a.gif")
    assert not list(tmp_path.iterdir())


def test_grayscale_scales_to_the_maximum() -> None:
    assert grayscale_pixels(np.array([[0.0, 1.0], [2.0, 4.0]])).tolist() == [[0, 64], [128, 255]]
    assert not grayscale_pixels(np.zeros((2, 2))).any()
