"""Constants and enums shared across every part of attrnet."""
from enum import Enum, auto

from strenum import StrEnum

CHECKPOINT_MAGIC = b"ATRN"
"""The first four bytes of every checkpoint file."""
CHECKPOINT_VERSION = 1
"""The checkpoint format version written by this library."""

MANIFEST_FILENAME = "manifest.csv"
SCHEMA_FILENAME = "schema.json"
HISTORY_FILENAME = "history.csv"

MANIFEST_FIXED_COLUMNS = ("image_path", "split", "bbox_x0", "bbox_y0", "bbox_x1", "bbox_y1")
"""The leading manifest columns; the class names follow them."""

HISTORY_COLUMNS = ("epoch", "phase", "lr", "train_loss", "val_loss")
CURVE_COLUMNS = ("class", "kind", "x", "y")

DEFAULT_CANONICAL_SIZE = 72
"""Scaled-down counterpart of `VGG_CANONICAL_SIZE`."""
DEFAULT_CROP_SIZE = 64
"""Scaled-down counterpart of `VGG_CROP_SIZE`."""
VGG_CANONICAL_SIZE = 256
VGG_CROP_SIZE = 224

DEFAULT_BBOX_MARGIN = 0.10


class Split(StrEnum):
    """The dataset split a record belongs to."""

    train = auto()
    val = auto()
    test = auto()


class Phase(StrEnum):
    """Which layers are trainable."""

    phase1 = auto()
    """Only the fully-connected layers."""
    phase2 = auto()
    """The fully-connected layers plus the conv block holding the finetune boundary."""
    full = auto()
    """Every layer."""


class PhaseMode(StrEnum):
    """How the trainer schedules the trainable layers."""

    two_phase = auto()
    full = auto()


class CropMode(StrEnum):
    """Whether images are evaluated whole or cropped to their bounding box."""

    whole = auto()
    bbox = auto()


class AugmentMode(StrEnum):
    train = auto()
    eval = auto()  # noqa: A003


class RunMode(StrEnum):
    """Whether an epoch updates parameters."""

    train = auto()
    validate = auto()


class LayerKind(StrEnum):
    """Every kind of layer a `ModelConfig` may contain."""

    conv = auto()
    pool = auto()
    affine = auto()
    relu = auto()
    sigmoid = auto()
    dropout = auto()
    flatten = auto()


PARAMETRIC_LAYER_KINDS = {LayerKind.conv, LayerKind.affine}


class AttributeGroup(StrEnum):
    """The attribute categories a class may belong to."""

    color = auto()
    shape = auto()
    pattern = auto()
    texture = auto()
    other = auto()
    """Used for manifests shipped without a schema sidecar."""


class LabelScheme(StrEnum):
    """How raw label values are encoded in a dataset."""

    ternary = auto()
    """-1 negative, 0 ambiguous, +1 positive."""
    binary = auto()
    """0 negative, 1 positive."""


class CurveKind(StrEnum):
    pr = auto()
    roc = auto()


class ExitCode(Enum):
    """Process exit codes of the command line interface."""

    OK = 0
    CONFIG = 2
    IO = 3
    NUMERIC = 4
