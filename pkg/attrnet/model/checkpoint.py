"""Versioned binary checkpoints.

Layout, all integers little-endian:

- 4 bytes magic `ATRN`
- u32 format version
- u64 length of the header in bytes
- UTF-8 JSON header: `config`, `metadata`, and a `tensors` directory of `{group, name, shape, offset, nbytes}`
- the tensor payload, float32, offsets relative to the payload start
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger
from pydantic import Field, ValidationError, model_validator
from typing_extensions import Self

from attrnet.consts import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    DEFAULT_CANONICAL_SIZE,
    DEFAULT_CROP_SIZE,
    Phase,
)
from attrnet.data.records import AttributeSchema
from attrnet.errors import ConfigMismatchError, CorruptCheckpointError, UnsupportedVersionError
from attrnet.generic.models import AttrNetArrayModel, arrays_equal
from attrnet.model.config import ModelConfig
from attrnet.utils import atomic_write_bytes

_PREAMBLE = struct.Struct("<4sIQ")
_PAYLOAD_DTYPE = np.dtype("<f4")
_TENSOR_GROUPS = ("params", "momentum")


def check_tensor_shapes(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    momentum: dict[str, np.ndarray],
) -> None:
    """Raise ConfigMismatchError unless `params` holds exactly the parameters of `config`, and `momentum` a
    subset of them, with matching shapes.
    """
    expected = config.parameter_shapes()
    if set(params) != set(expected):
        raise ConfigMismatchError(f"stored parameters {sorted(params)} do not match the config's {sorted(expected)}")
    for group in (params, momentum):
        for name, array in group.items():
            if name not in expected or tuple(array.shape) != expected[name]:
                raise ConfigMismatchError(
                    f"tensor {name} has shape {array.shape}, config expects {expected.get(name)}",
                )


class Checkpoint(AttrNetArrayModel):
    """Everything needed to resume training or to run inference."""

    version: int = CHECKPOINT_VERSION
    config: ModelConfig
    params: dict[str, np.ndarray]
    """Parameter values keyed `<layer>.weight` / `<layer>.bias`, float32."""
    momentum: dict[str, np.ndarray] = Field(default_factory=dict)
    """Optimizer velocity buffers, keyed like `params`; empty before the first step."""
    epoch: int = Field(default=0, ge=0)
    lr: float = Field(default=0.001, ge=0)
    base_lr: float = Field(default=0.001, gt=0)
    mean_rgb: tuple[float, float, float] = (0.0, 0.0, 0.0)
    """Per-channel mean of the (cropped) training images, subtracted at preprocessing."""
    rng_state: dict[str, Any] | None = None
    """The `bit_generator.state` of the training generator."""
    attribute_schema: AttributeSchema | None = None
    canonical_size: int = Field(default=DEFAULT_CANONICAL_SIZE, ge=1)
    crop_size: int = Field(default=DEFAULT_CROP_SIZE, ge=1)
    crop_bbox: bool = False
    """Whether training images were cropped to their bounding boxes."""
    phase: Phase = Phase.phase1
    best_val_loss: float | None = None

    @model_validator(mode="after")
    def shapes_match_config(self) -> Self:
        check_tensor_shapes(self.config, self.params, self.momentum)
        if self.attribute_schema is not None and self.attribute_schema.num_classes != self.config.num_classes:
            raise ValueError(
                f"schema has {self.attribute_schema.num_classes} classes, network has {self.config.num_classes}",
            )
        return self

    def same_as(self, other: Checkpoint) -> bool:
        """Return True if both checkpoints hold identical metadata and bit-identical tensors."""
        if self.model_dump(exclude={"params", "momentum"}) != other.model_dump(exclude={"params", "momentum"}):
            return False
        for mine, theirs in ((self.params, other.params), (self.momentum, other.momentum)):
            if set(mine) != set(theirs) or not all(arrays_equal(mine[name], theirs[name]) for name in mine):
                return False
        return True


def _metadata(checkpoint: Checkpoint) -> dict[str, Any]:
    return checkpoint.model_dump(mode="json", by_alias=True, exclude={"params", "momentum", "config", "version"})


def checkpoint_to_bytes(checkpoint: Checkpoint) -> bytes:
    """Serialize `checkpoint` in the versioned binary layout."""
    directory: list[dict[str, Any]] = []
    chunks: list[bytes] = []
    offset = 0
    for group in _TENSOR_GROUPS:
        tensors: dict[str, np.ndarray] = getattr(checkpoint, group)
        for name in sorted(tensors):
            data = np.ascontiguousarray(tensors[name], dtype=_PAYLOAD_DTYPE).tobytes()
            directory.append(
                {
                    "group": group,
                    "name": name,
                    "shape": list(tensors[name].shape),
                    "offset": offset,
                    "nbytes": len(data),
                },
            )
            chunks.append(data)
            offset += len(data)
    header = json.dumps(
        {
            "config": checkpoint.config.model_dump(mode="json"),
            "metadata": _metadata(checkpoint),
            "tensors": directory,
            "payload_nbytes": offset,
        },
        sort_keys=True,
    ).encode("utf-8")
    return _PREAMBLE.pack(CHECKPOINT_MAGIC, checkpoint.version, len(header)) + header + b"".join(chunks)


def save_checkpoint(path: Path | str, checkpoint: Checkpoint) -> None:
    """Write `checkpoint` to `path` atomically."""
    atomic_write_bytes(Path(path), checkpoint_to_bytes(checkpoint))
    logger.info(f"wrote checkpoint {path} (epoch {checkpoint.epoch}, phase {checkpoint.phase})")


def checkpoint_from_bytes(raw: bytes, *, source: str = "<bytes>") -> Checkpoint:
    """Parse a serialized checkpoint.

    Raises:
        CorruptCheckpointError: If the bytes are truncated or malformed.
        UnsupportedVersionError: If the format version is not the one this library writes.
        ConfigMismatchError: If the stored tensors disagree with the stored config.
    """
    if len(raw) < _PREAMBLE.size:
        raise CorruptCheckpointError(f"{source}: file is too short to be a checkpoint")
    magic, version, header_length = _PREAMBLE.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{source}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"{source}: checkpoint format version {version} is not supported (expected {CHECKPOINT_VERSION})",
        )
    header_end = _PREAMBLE.size + header_length
    if header_end > len(raw):
        raise CorruptCheckpointError(f"{source}: header is truncated")
    try:
        header = json.loads(raw[_PREAMBLE.size : header_end].decode("utf-8"))
        config = ModelConfig.model_validate(header["config"])
        directory = header["tensors"]
        payload_nbytes = int(header["payload_nbytes"])
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptCheckpointError(f"{source}: malformed header ({e})") from e

    payload = raw[header_end:]
    if len(payload) != payload_nbytes:
        raise CorruptCheckpointError(f"{source}: payload has {len(payload)} bytes, header declares {payload_nbytes}")

    groups: dict[str, dict[str, np.ndarray]] = {group: {} for group in _TENSOR_GROUPS}
    try:
        for entry in directory:
            start, nbytes = int(entry["offset"]), int(entry["nbytes"])
            shape = tuple(int(size) for size in entry["shape"])
            if start < 0 or start + nbytes > len(payload) or nbytes != int(np.prod(shape)) * _PAYLOAD_DTYPE.itemsize:
                raise CorruptCheckpointError(f"{source}: tensor {entry['name']} lies outside the payload")
            array = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE, count=nbytes // 4, offset=start)
            groups[entry["group"]][entry["name"]] = array.reshape(shape).astype(np.float32)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptCheckpointError(f"{source}: malformed tensor directory ({e})") from e

    check_tensor_shapes(config, groups["params"], groups["momentum"])
    try:
        return Checkpoint.model_validate(
            {**header["metadata"], "version": version, "config": config, **groups},
        )
    except ValidationError as e:
        raise CorruptCheckpointError(f"{source}: invalid metadata ({e.error_count()} errors)") from e


def load_checkpoint(path: Path | str, *, expected_config: ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint written by `save_checkpoint`.

    Args:
        path (Path | str): The checkpoint file.
        expected_config (ModelConfig | None, optional): When given, the checkpoint must describe the same
            network (freeze flags aside).

    Raises:
        CorruptCheckpointError: If the file is truncated or malformed; nothing is returned in that case.
        UnsupportedVersionError: If the format version is unsupported.
        ConfigMismatchError: If the tensors disagree with the stored config, or the stored config with
            `expected_config`.
    """
    checkpoint = checkpoint_from_bytes(Path(path).read_bytes(), source=str(path))
    if expected_config is not None and not checkpoint.config.same_architecture(expected_config):
        raise ConfigMismatchError(
            f"{path}: checkpoint network ({checkpoint.config.num_classes} classes, "
            f"input {checkpoint.config.input_size}) "
            f"does not match the requested network ({expected_config.num_classes} classes, "
            f"input {expected_config.input_size})",
        )
    logger.debug(f"loaded checkpoint {path}")
    return checkpoint


__all__ = [
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_to_bytes",
    "checkpoint_from_bytes",
]
