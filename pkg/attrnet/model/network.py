"""Running a `ModelConfig` forward over a parameter set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger

from attrnet.consts import LayerKind
from attrnet.errors import DimensionError
from attrnet.model.config import LayerSpec, ModelConfig
from attrnet.model.params import ParameterSet
from attrnet.tensor import Tensor, affine, conv2d, dropout, flatten, maxpool2, no_grad, relu, sigmoid


def apply_layer(
    layer: LayerSpec,
    x: Tensor,
    params: ParameterSet,
    *,
    training: bool,
    rng: np.random.Generator,
) -> Tensor:
    """Run one layer over a batched input."""
    if layer.kind == LayerKind.conv:
        return conv2d(
            x,
            params[f"{layer.name}.weight"],
            params[f"{layer.name}.bias"],
            stride=layer.stride,
            padding=layer.padding,
        )
    if layer.kind == LayerKind.affine:
        return affine(x, params[f"{layer.name}.weight"], params[f"{layer.name}.bias"])
    if layer.kind == LayerKind.pool:
        return maxpool2(x)
    if layer.kind == LayerKind.relu:
        return relu(x)
    if layer.kind == LayerKind.sigmoid:
        return sigmoid(x)
    if layer.kind == LayerKind.dropout:
        assert layer.rate is not None
        return dropout(x, layer.rate, training, rng)
    return flatten(x)


def _check_batch(config: ModelConfig, batch: Tensor) -> None:
    if batch.ndim != 4 or batch.shape[1:] != tuple(config.input_size):
        raise DimensionError(f"expected a batch shaped [B,{','.join(map(str, config.input_size))}], got {batch.shape}")


def forward(
    config: ModelConfig,
    params: ParameterSet,
    batch: Tensor,
    training: bool,
    rng: np.random.Generator,
) -> tuple[Tensor, Tensor]:
    """Run the network over `batch` (`[B,C,H,W]`).

    Args:
        config (ModelConfig): The network.
        params (ParameterSet): Its parameters.
        batch (Tensor): Preprocessed images.
        training (bool): Enables dropout.
        rng (np.random.Generator): Drives dropout; untouched in eval mode.

    Raises:
        DimensionError: If `batch` does not match `config.input_size`.

    Returns:
        tuple[Tensor, Tensor]: `(scores, logits)`, both `[B,N]`, with `scores = sigmoid(logits)`.
    """
    _check_batch(config, batch)
    x = batch
    logits = batch
    for layer in config.layers:
        if layer.kind == LayerKind.sigmoid:
            logits = x
        x = apply_layer(layer, x, params, training=training, rng=rng)
    return x, logits


@dataclass(frozen=True)
class LayerActivation:
    """The arrays entering and leaving one layer during an eval-mode forward pass."""

    layer: LayerSpec
    input: np.ndarray  # noqa: A003
    output: np.ndarray


def forward_with_activations(config: ModelConfig, params: ParameterSet, batch: Tensor) -> list[LayerActivation]:
    """Run an eval-mode forward pass without a graph, keeping every layer's input and output."""
    _check_batch(config, batch)
    rng = np.random.default_rng(0)
    activations: list[LayerActivation] = []
    with no_grad():
        x = batch
        for layer in config.layers:
            y = apply_layer(layer, x, params, training=False, rng=rng)
            activations.append(LayerActivation(layer=layer, input=x.data, output=y.data))
            x = y
    logger.debug(f"recorded activations of {len(activations)} layers")
    return activations


__all__ = [
    "forward",
    "forward_with_activations",
    "apply_layer",
    "LayerActivation",
]
