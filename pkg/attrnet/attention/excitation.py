"""Class-conditioned attention maps by top-down excitation propagation.

A unit mass is placed on one class logit and pushed back through the network. Across a conv or affine layer,
each output unit hands its mass to the input units in proportion to `activation * max(w, 0)`; ReLU and dropout
pass mass straight through, pooling routes it to each window's winner, and flatten only reshapes it. Output
units whose positive inputs sum to zero keep their mass, which is reported as lost. The sigmoid is skipped:
propagation starts at the logits.
"""
from __future__ import annotations

import numpy as np
from loguru import logger
from pydantic import Field

from attrnet.consts import AugmentMode, LayerKind
from attrnet.data.preprocess import crop_offsets, preprocess_array, resize_bilinear
from attrnet.errors import ConfigError, ParameterError
from attrnet.generic.models import AttrNetArrayModel, AttrNetModel
from attrnet.model.checkpoint import Checkpoint
from attrnet.model.config import ModelConfig
from attrnet.model.network import LayerActivation, forward_with_activations
from attrnet.model.params import parameters_from_arrays
from attrnet.tensor import Tensor
from attrnet.tensor.ops import conv2d_input_transpose, im2col, maxpool2_forward, maxpool2_scatter

INPUT_LAYER = "input"
"""The pseudo layer name for reading a map at the network input."""


class AttentionMapMetadata(AttrNetModel):
    """The JSON sidecar written next to exported maps."""

    class_index: int
    class_name: str | None = None
    layer: str
    injected_mass: float
    lost_mass: float
    lost_mass_fraction: float = Field(ge=0, le=1)
    max_location: tuple[int, int]
    """(row, column) of the largest value at input resolution."""


class AttentionMap(AttrNetArrayModel):
    """Where the excitation for one class ends up, at one layer."""

    class_index: int
    class_name: str | None = None
    layer: str
    layer_values: np.ndarray
    """`[h,w]` mass per location of the target layer, summed over channels."""
    values: np.ndarray
    """`[H,W]` the same mass at input resolution, each cell spread evenly over its block."""
    injected_mass: float = 1.0
    lost_mass: float = 0.0

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def lost_mass_fraction(self) -> float:
        return min(1.0, max(0.0, self.lost_mass / self.injected_mass))

    @property
    def max_location(self) -> tuple[int, int]:
        row, column = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(row), int(column)

    def metadata(self) -> AttentionMapMetadata:
        return AttentionMapMetadata(
            class_index=self.class_index,
            class_name=self.class_name,
            layer=self.layer,
            injected_mass=self.injected_mass,
            lost_mass=self.lost_mass,
            lost_mass_fraction=self.lost_mass_fraction,
            max_location=self.max_location,
        )


def _share(parent_mass: np.ndarray, normalizer: np.ndarray) -> tuple[np.ndarray, float]:
    """Return `parent_mass / normalizer` where the normalizer is positive (0 elsewhere), and the mass lost."""
    alive = normalizer > 0
    ratio = np.zeros_like(parent_mass)
    np.divide(parent_mass, normalizer, out=ratio, where=alive)
    return ratio, float(parent_mass[~alive].sum())


def affine_excitation(
    activations: np.ndarray,
    weight: np.ndarray,
    parent_mass: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Distribute `[b,D_out]` mass onto `[b,D_in]` nonnegative `activations` through `max(weight, 0)`."""
    positive = np.maximum(weight, 0)
    ratio, lost = _share(parent_mass, activations @ positive.T)
    return activations * (ratio @ positive), lost


def conv_excitation(
    activations: np.ndarray,
    kernels: np.ndarray,
    parent_mass: np.ndarray,
    stride: int,
    padding: int,
) -> tuple[np.ndarray, float]:
    """Distribute `[b,O,H',W']` mass onto `[b,C,H,W]` nonnegative `activations` through `max(kernels, 0)`."""
    positive = np.maximum(kernels, 0)
    out_channels, _, kernel_h, kernel_w = positive.shape
    batch, _, out_h, out_w = parent_mass.shape
    cols = im2col(activations, kernel_h, kernel_w, stride, padding)
    normalizer = (cols @ positive.reshape(out_channels, -1).T).reshape(batch, out_h, out_w, out_channels)
    ratio, lost = _share(parent_mass, normalizer.transpose(0, 3, 1, 2))
    return activations * conv2d_input_transpose(ratio, positive, activations.shape, stride, padding), lost


def _layer_excitation(
    activation: LayerActivation,
    params: dict[str, np.ndarray],
    parent_mass: np.ndarray,
    clamp_input: bool,
) -> tuple[np.ndarray, float]:
    layer = activation.layer
    child = np.asarray(activation.input, dtype=np.float64)
    if clamp_input:
        child = np.maximum(child, 0)
    if layer.kind == LayerKind.affine:
        return affine_excitation(child, params[f"{layer.name}.weight"], parent_mass)
    if layer.kind == LayerKind.conv:
        return conv_excitation(child, params[f"{layer.name}.weight"], parent_mass, layer.stride, layer.padding)
    if layer.kind == LayerKind.pool:
        _, argmax = maxpool2_forward(child)
        return maxpool2_scatter(parent_mass, argmax), 0.0
    if layer.kind == LayerKind.flatten:
        return parent_mass.reshape(child.shape), 0.0
    return parent_mass, 0.0


def _target_index(config: ModelConfig, target_layer: str | None) -> int:
    """Return the index of the layer whose output holds the map, or -1 for the network input."""
    if target_layer == INPUT_LAYER:
        return -1
    if target_layer is None:
        return next((index for index, layer in enumerate(config.layers) if layer.kind == LayerKind.conv), -1)
    conv_names = [layer.name for layer in config.layers if layer.kind == LayerKind.conv]
    if target_layer not in conv_names:
        raise ConfigError(f"target layer {target_layer!r} must be {INPUT_LAYER!r} or one of {', '.join(conv_names)}")
    return config.layer_index(target_layer)


def _upsample(layer_values: np.ndarray, height: int, width: int) -> np.ndarray:
    factor_h, factor_w = height // layer_values.shape[0], width // layer_values.shape[1]
    if factor_h * layer_values.shape[0] != height or factor_w * layer_values.shape[1] != width:
        raise ConfigError(f"cannot upsample a {layer_values.shape} map to {height}x{width}")
    return np.kron(layer_values, np.ones((factor_h, factor_w))) / (factor_h * factor_w)


def excitation_map_from_params(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    image: np.ndarray,
    class_index: int,
    target_layer: str | None = None,
    class_name: str | None = None,
) -> AttentionMap:
    """Compute the map of `class_index` for one preprocessed `[C,H,W]` image.

    Args:
        config (ModelConfig): The network.
        params (dict[str, np.ndarray]): Its parameter values.
        image (np.ndarray): The network input.
        class_index (int): The logit that receives the unit excitation.
        target_layer (str | None, optional): A conv layer name, or `input`. Defaults to the first conv layer.
        class_name (str | None, optional): Recorded in the map.

    Raises:
        ParameterError: If `class_index` is out of range.
        ConfigError: If `target_layer` is neither a conv layer nor `input`.
    """
    if not 0 <= class_index < config.num_classes:
        raise ParameterError(f"class index {class_index} is outside 0..{config.num_classes - 1}")
    target = _target_index(config, target_layer)
    tensors = parameters_from_arrays(config, params)
    with_batch = image[np.newaxis] if image.ndim == 3 else image
    activations = forward_with_activations(config, tensors, Tensor(with_batch))
    arrays = {name: np.asarray(value, dtype=np.float64) for name, value in params.items()}

    sigmoid_index = len(config.layers) - 1
    mass = np.zeros((1, config.num_classes), dtype=np.float64)
    mass[0, class_index] = 1.0
    lost = 0.0
    for index in range(sigmoid_index - 1, target, -1):
        mass, dropped = _layer_excitation(activations[index], arrays, mass, clamp_input=index == 0)
        lost += dropped
        if dropped > 0:
            logger.debug(f"{config.layers[index].name}: {dropped:.6g} mass had no positive path")

    if lost > 0:
        logger.warning(f"{lost:.6g} of the injected mass found no positive path and was dropped")
    layer_values = np.maximum(mass[0].sum(axis=0), 0)
    layer_name = INPUT_LAYER if target == -1 else config.layers[target].name
    height, width = config.input_size[1:]
    return AttentionMap(
        class_index=class_index,
        class_name=class_name,
        layer=layer_name,
        layer_values=layer_values,
        values=_upsample(layer_values, height, width),
        injected_mass=1.0,
        lost_mass=lost,
    )


def _center_crop(checkpoint: Checkpoint) -> tuple[int, int, int]:
    canonical = checkpoint.canonical_size
    crop = checkpoint.crop_size
    top, left, _ = crop_offsets((canonical, canonical), crop, AugmentMode.eval, np.random.default_rng(0))
    return top, left, crop


def network_input(checkpoint: Checkpoint, pixels: np.ndarray) -> np.ndarray:
    """Preprocess `[H,W,3]` pixels the way evaluation does: resize, subtract the mean, center crop."""
    image = preprocess_array(pixels, checkpoint.canonical_size, checkpoint.mean_rgb)
    top, left, crop = _center_crop(checkpoint)
    return np.ascontiguousarray(image[:, top : top + crop, left : left + crop], dtype=np.float32)


def input_view(checkpoint: Checkpoint, pixels: np.ndarray) -> np.ndarray:
    """Return the `[crop,crop,3]` uint8 pixels the network sees for `pixels`, for drawing maps onto."""
    canonical = checkpoint.canonical_size
    resized = np.clip(np.rint(resize_bilinear(pixels, canonical, canonical)), 0, 255).astype(np.uint8)
    top, left, crop = _center_crop(checkpoint)
    return resized[top : top + crop, left : left + crop]


def excitation_map(
    checkpoint: Checkpoint,
    image: np.ndarray,
    class_index: int,
    target_layer: str | None = None,
) -> AttentionMap:
    """Compute the attention map of one class for one preprocessed `[C,H,W]` image (see `network_input`)."""
    schema = checkpoint.attribute_schema
    class_name = None
    if schema is not None and 0 <= class_index < schema.num_classes:
        class_name = schema.class_names[class_index]
    return excitation_map_from_params(
        checkpoint.config,
        checkpoint.params,
        image,
        class_index,
        target_layer,
        class_name,
    )


__all__ = [
    "INPUT_LAYER",
    "AttentionMap",
    "AttentionMapMetadata",
    "excitation_map",
    "excitation_map_from_params",
    "affine_excitation",
    "conv_excitation",
    "network_input",
    "input_view",
]
