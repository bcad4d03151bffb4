"""Stochastic gradient descent with momentum and weight decay."""
from __future__ import annotations

import numpy as np

from attrnet.errors import NumericError
from attrnet.model.params import ParameterSet
from attrnet.trainer.config import TrainerConfig, TrainState


def sgd_step(params: ParameterSet, state: TrainState, config: TrainerConfig) -> None:
    """Apply one update to every parameter which requires grad.

    `v <- momentum * v + grad + weight_decay * param`, then `param <- param - lr * v`. Weight decay covers
    biases too. Parameters with `requires_grad=False` (frozen layers) and their buffers are left untouched.

    Raises:
        NumericError: If any gradient is NaN or infinite; no parameter is updated in that case.
    """
    trainable = {name: tensor for name, tensor in params.items() if tensor.requires_grad}
    for name, tensor in trainable.items():
        if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
            raise NumericError(f"gradient of {name} is not finite")

    for name, tensor in trainable.items():
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        velocity = state.momentum.get(name)
        if velocity is None:
            velocity = np.zeros_like(tensor.data)
        velocity = (config.momentum * velocity + grad + config.weight_decay * tensor.data).astype(tensor.dtype)
        state.momentum[name] = velocity
        tensor.data = (tensor.data - state.lr * velocity).astype(tensor.dtype)


def zero_grads(params: ParameterSet) -> None:
    for tensor in params.values():
        tensor.zero_grad()


__all__ = [
    "sgd_step",
    "zero_grads",
]
