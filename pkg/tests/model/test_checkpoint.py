import struct
from pathlib import Path

import numpy as np
import pytest

from attrnet.consts import CHECKPOINT_MAGIC, AttributeGroup, Phase
from attrnet.data.records import AttributeSchema
from attrnet.errors import ConfigMismatchError, CorruptCheckpointError, UnsupportedVersionError
from attrnet.model.checkpoint import (
    Checkpoint,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    load_checkpoint,
    save_checkpoint,
)
from attrnet.model.params import initialize, parameter_arrays
from tests.conftest import tiny_config


@pytest.fixture
def checkpoint() -> Checkpoint:
    config = tiny_config()
    params = parameter_arrays(initialize(config, np.random.default_rng(2)))
    rng = np.random.default_rng(8)
    schema = AttributeSchema.from_groups(
        {AttributeGroup.color: ["red"], AttributeGroup.shape: ["round"], AttributeGroup.pattern: ["striped"]},
    )
    return Checkpoint(
        config=config,
        params=params,
        momentum={name: rng.normal(size=array.shape).astype(np.float32) for name, array in params.items()},
        epoch=7,
        lr=0.0001,
        mean_rgb=(120.5, 110.25, 99.0),
        rng_state=rng.bit_generator.state,
        attribute_schema=schema,
        crop_bbox=True,
        phase=Phase.phase2,
        best_val_loss=0.125,
    )


def test_round_trip_is_bit_exact(tmp_path: Path, checkpoint: Checkpoint) -> None:
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, checkpoint)
    loaded = load_checkpoint(path)
    assert loaded.same_as(checkpoint)
    assert loaded.attribute_schema == checkpoint.attribute_schema
    assert loaded.phase == Phase.phase2
    assert path.read_bytes()[:4] == CHECKPOINT_MAGIC


def test_serialization_is_deterministic(checkpoint: Checkpoint) -> None:
    assert checkpoint_to_bytes(checkpoint) == checkpoint_to_bytes(checkpoint)


def test_restored_rng_continues_the_stream(checkpoint: Checkpoint) -> None:
    loaded = checkpoint_from_bytes(checkpoint_to_bytes(checkpoint))
    assert loaded.rng_state is not None
    original = np.random.default_rng()
    original.bit_generator.state = checkpoint.rng_state
    restored = np.random.default_rng()
    restored.bit_generator.state = loaded.rng_state
    np.testing.assert_array_equal(original.random(5), restored.random(5))


@pytest.mark.parametrize("keep", [0, 3, 10, 200, -1])
def test_truncated_files(checkpoint: Checkpoint, keep: int) -> None:
    raw = checkpoint_to_bytes(checkpoint)
    with pytest.raises(CorruptCheckpointError):
        checkpoint_from_bytes(raw[:keep])


def test_wrong_magic(checkpoint: Checkpoint) -> None:
    raw = checkpoint_to_bytes(checkpoint)
    with pytest.raises(CorruptCheckpointError, match="not a checkpoint"):
        checkpoint_from_bytes(b"XXXX" + raw[4:])


def test_unsupported_version(checkpoint: Checkpoint) -> None:
    raw = bytearray(checkpoint_to_bytes(checkpoint))
    raw[4:8] = struct.pack("<I", 99)
    with pytest.raises(UnsupportedVersionError):
        checkpoint_from_bytes(bytes(raw))


def test_garbage_header(checkpoint: Checkpoint) -> None:
    raw = bytearray(checkpoint_to_bytes(checkpoint))
    raw[16:20] = b"\xff\xfe{["
    with pytest.raises(CorruptCheckpointError):
        checkpoint_from_bytes(bytes(raw))


def test_expected_config_mismatch(tmp_path: Path, checkpoint: Checkpoint) -> None:
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, checkpoint)
    assert load_checkpoint(path, expected_config=tiny_config()).epoch == 7
    with pytest.raises(ConfigMismatchError, match="3 classes"):
        load_checkpoint(path, expected_config=tiny_config(num_classes=4))


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(OSError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_parameters_must_match_the_config(checkpoint: Checkpoint) -> None:
    params = dict(checkpoint.params)
    del params["fcB.bias"]
    with pytest.raises(ValueError, match="fcB.bias"):
        Checkpoint(config=checkpoint.config, params=params)
