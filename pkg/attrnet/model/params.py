"""Parameter initialization, warm starts and trainability marking."""
from __future__ import annotations

from collections.abc import Iterable
from typing import TYPE_CHECKING

import numpy as np
from loguru import logger

from attrnet.consts import LayerKind
from attrnet.errors import ConfigMismatchError
from attrnet.model.config import ModelConfig
from attrnet.tensor import Tensor, default_dtype

if TYPE_CHECKING:
    from attrnet.model.checkpoint import Checkpoint

ParameterSet = dict[str, Tensor]
"""Parameter tensors keyed `<layer>.weight` and `<layer>.bias`."""

AFFINE_WEIGHT_STD = 0.005
AFFINE_BIAS = 0.1


def _initialize_layer(
    config: ModelConfig,
    layer_name: str,
    shapes: dict[str, tuple[int, ...]],
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    layer = config.layer(layer_name)
    weight_shape = shapes[f"{layer_name}.weight"]
    bias_shape = shapes[f"{layer_name}.bias"]
    dtype = default_dtype()
    if layer.kind == LayerKind.affine:
        weight = rng.normal(0.0, AFFINE_WEIGHT_STD, size=weight_shape)
        bias = np.full(bias_shape, AFFINE_BIAS)
    else:
        fan_in = int(np.prod(weight_shape[1:]))
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=weight_shape)
        bias = np.zeros(bias_shape)
    return {f"{layer_name}.weight": weight.astype(dtype), f"{layer_name}.bias": bias.astype(dtype)}


def initialize(config: ModelConfig, rng: np.random.Generator) -> ParameterSet:
    """Draw a fresh parameter set for `config`.

    Affine layers get Gaussian(0, 0.005) weights and biases of exactly 0.1; conv layers get zero-mean
    Gaussian weights with std `sqrt(2 / fan_in)` and zero biases. Layers are drawn in config order.
    """
    shapes = config.parameter_shapes()
    arrays: dict[str, np.ndarray] = {}
    for layer in config.layers:
        if layer.has_parameters:
            arrays.update(_initialize_layer(config, layer.name, shapes, rng))
    params = {name: Tensor(array, requires_grad=True, name=name) for name, array in arrays.items()}
    mark_trainable(config, params)
    return params


def mark_trainable(config: ModelConfig, params: ParameterSet) -> None:
    """Set `requires_grad` on every parameter to match its layer's freeze flag.

    Frozen parameters then record no graph, so their layers cost no backward work.
    """
    frozen = config.frozen_parameter_names()
    for name, tensor in params.items():
        tensor.requires_grad = name not in frozen


def warm_start(
    params: ParameterSet,
    checkpoint: Checkpoint,
    reinit_layers: Iterable[str] = (),
) -> ParameterSet:
    """Copy every parameter from `checkpoint` into a copy of `params`, except those of `reinit_layers`.

    `params` must be a freshly initialized set; the layers listed in `reinit_layers` keep those fresh values,
    which is how new heads are attached to a trained body.

    Raises:
        ConfigMismatchError: If a copied parameter is missing from the checkpoint or has a different shape.
    """
    reinit = set(reinit_layers)
    result: ParameterSet = {}
    for name, tensor in params.items():
        layer_name = name.rsplit(".", 1)[0]
        if layer_name in reinit:
            result[name] = tensor
            continue
        source = checkpoint.params.get(name)
        if source is None:
            raise ConfigMismatchError(f"checkpoint has no parameter {name}")
        if source.shape != tensor.shape:
            raise ConfigMismatchError(
                f"parameter {name}: checkpoint has shape {source.shape}, model needs {tensor.shape}",
            )
        result[name] = Tensor(source, requires_grad=tensor.requires_grad, dtype=tensor.dtype, name=name)
    logger.info(f"warm-started {len(result)} parameter tensors, re-initialized layers: {sorted(reinit) or 'none'}")
    return result


def parameter_arrays(params: ParameterSet) -> dict[str, np.ndarray]:
    """Return copies of the parameter values, for checkpoints and comparisons."""
    return {name: tensor.data.copy() for name, tensor in params.items()}


def parameters_from_arrays(config: ModelConfig, arrays: dict[str, np.ndarray]) -> ParameterSet:
    """Wrap stored arrays as parameter tensors marked trainable per `config`."""
    params = {name: Tensor(arrays[name], requires_grad=True, dtype=arrays[name].dtype, name=name) for name in arrays}
    mark_trainable(config, params)
    return params


__all__ = [
    "ParameterSet",
    "initialize",
    "mark_trainable",
    "warm_start",
    "parameter_arrays",
    "parameters_from_arrays",
]
