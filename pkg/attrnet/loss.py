"""Batch-weighted multi-label cross-entropy.

Each class k gets the weight `w_k = 1 - mean_j(y_kj)` computed from the current batch's targets, and the loss
is the full two-term binary cross-entropy of every (sample, class) pair scaled by its class weight, averaged
over the batch:

    L = (1/B) sum_j sum_k w_k * [ -y log s(o) - (1 - y) log(1 - s(o)) ]

Note the weighting gives frequent classes *low* weight, although it is sometimes described the other way round.
"""
from __future__ import annotations

import numpy as np
from typing_extensions import override

from attrnet.errors import DimensionError, NumericError, ParameterError
from attrnet.tensor import Function, Tensor
from attrnet.tensor.ops import stable_sigmoid


def batch_class_weights(targets: np.ndarray) -> np.ndarray:
    """Return the per-class weights `1 - mean over the batch` of a `[B,N]` target matrix.

    Raises:
        ParameterError: If the batch is empty or not two dimensional.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2:
        raise ParameterError(f"targets must be [B,N], got shape {targets.shape}")
    if targets.shape[0] == 0:
        raise ParameterError("cannot weight an empty batch")
    return 1.0 - targets.sum(axis=0) / targets.shape[0]


def weighted_ce_terms(logits: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Return the `[B,N]` weighted cross-entropy terms, before the batch mean.

    Uses `max(o, 0) - o*y + log(1 + exp(-|o|))`, which equals the two-term cross-entropy without overflow.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    terms = np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return terms * np.asarray(weights, dtype=np.float64)


class WeightedSigmoidCrossEntropy(Function):
    """Sigmoid and weighted cross-entropy fused into one op over logits."""

    kind = "weighted_sigmoid_ce"

    targets: np.ndarray
    weights: np.ndarray

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        logits = arrays[0]
        self._logits = logits
        batch_size = logits.shape[0]
        value = weighted_ce_terms(logits, self.targets, self.weights).sum() / batch_size
        return np.asarray(value, dtype=logits.dtype)

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        batch_size = self._logits.shape[0]
        scores = stable_sigmoid(self._logits.astype(np.float64))
        local = self.weights * (scores - self.targets) / batch_size
        return ((grad * local).astype(self._logits.dtype),)


def weighted_ce_loss(logits: Tensor, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    """Return the scalar batch loss of `[B,N]` logits against `[B,N]` targets in {0, 0.5, 1}.

    The gradient with respect to a logit is `w_k (sigmoid(o) - y) / B`. Weights are constants of the graph.

    Args:
        logits (Tensor): Pre-sigmoid scores.
        targets (np.ndarray): Mapped labels.
        weights (np.ndarray): One weight per class, normally `batch_class_weights(targets)`.

    Raises:
        DimensionError: If the shapes disagree.
        NumericError: If a logit is NaN or infinite.
    """
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if logits.ndim != 2 or targets.shape != logits.shape:
        raise DimensionError(f"logits {logits.shape} and targets {targets.shape} must both be [B,N]")
    if weights.shape != (logits.shape[1],):
        raise DimensionError(f"weights must have shape ({logits.shape[1]},), got {weights.shape}")
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("logits contain non-finite values")
    return WeightedSigmoidCrossEntropy.apply(logits, targets=targets, weights=weights)


__all__ = [
    "batch_class_weights",
    "weighted_ce_terms",
    "weighted_ce_loss",
]
