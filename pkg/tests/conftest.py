from pathlib import Path

import hypothesis
import numpy as np
import pytest

from attrnet.consts import Split
from attrnet.data.manifest import write_manifest
from attrnet.data.records import AttributeSchema, DatasetRecord
from attrnet.data.synthetic import SyntheticConfig, generate_synthetic
from attrnet.model.config import ModelConfig, build_tinydan

hypothesis.settings.register_profile("fast", max_examples=10)
hypothesis.settings.register_profile("thorough", max_examples=500)

TINY_CONV_WIDTHS = (4, 4, 8, 8)
TINY_FC_WIDTHS = (16, 8)


def pytest_collection_modifyitems(items: list) -> None:
    """Modifies test items in place to ensure test modules run in a given order."""
    MODULE_ORDER = ["test_generic", "test_utils", "test_cli", "test_end_to_end"]
    # The end to end modules train networks and go last
    module_mapping = {item: item.module.__name__.rsplit(".", 1)[-1] for item in items}

    sorted_items = items.copy()

    # Iteratively move tests of each module to the end of the test queue
    for module in MODULE_ORDER:
        sorted_items = [it for it in sorted_items if module_mapping[it] != module] + [
            it for it in sorted_items if module_mapping[it] == module
        ]

    items[:] = sorted_items


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def tiny_config(num_classes: int = 3, side: int = 16, dropout_rate: float = 0.5) -> ModelConfig:
    return build_tinydan(
        num_classes,
        (3, side, side),
        conv_widths=TINY_CONV_WIDTHS,
        fc_widths=TINY_FC_WIDTHS,
        dropout_rate=dropout_rate,
    )


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return tiny_config()


@pytest.fixture(scope="session")
def small_synthetic() -> tuple[list[DatasetRecord], AttributeSchema]:
    """A handful of 32x32 synthetic records in every split."""
    config = SyntheticConfig(train_count=24, val_count=8, test_count=8, image_size=32, seed=7)
    return generate_synthetic(config, max_workers=2)


@pytest.fixture
def synthetic_dir(tmp_path: Path, small_synthetic: tuple[list[DatasetRecord], AttributeSchema]) -> Path:
    records, schema = small_synthetic
    directory = tmp_path / "dataset"
    write_manifest(records, schema, directory)
    return directory


def make_record(
    image_id: str,
    labels: tuple[int, ...],
    *,
    size: int = 16,
    split: Split = Split.train,
    color: tuple[int, int, int] = (200, 30, 30),
) -> DatasetRecord:
    pixels = np.empty((size, size, 3), dtype=np.uint8)
    pixels[...] = color
    return DatasetRecord(image_id=image_id, pixels=pixels, labels=labels, split=split)
