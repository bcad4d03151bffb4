"""Epoch iteration and the two-phase training protocol."""
from __future__ import annotations

import csv
import io
from collections.abc import Iterator
from pathlib import Path

import numpy as np
from loguru import logger

from attrnet.consts import HISTORY_COLUMNS, AugmentMode, LabelScheme, Phase, PhaseMode, RunMode
from attrnet.data.labels import map_labels
from attrnet.data.preprocess import PreparedSplit, augment_array, crop_offsets
from attrnet.data.records import AttributeSchema
from attrnet.errors import NumericError, ParameterError
from attrnet.generic.models import AttrNetArrayModel
from attrnet.loss import batch_class_weights, weighted_ce_loss
from attrnet.model.checkpoint import Checkpoint
from attrnet.model.config import ModelConfig, set_trainable
from attrnet.model.network import forward
from attrnet.model.params import ParameterSet, mark_trainable, parameter_arrays
from attrnet.tensor import Tensor, backward, no_grad
from attrnet.trainer.config import HistoryRow, StopReason, TrainerConfig, TrainState
from attrnet.trainer.optim import sgd_step, zero_grads
from attrnet.utils import atomic_write_text


def _batches(order: np.ndarray, batch_size: int) -> Iterator[np.ndarray]:
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def batch_images(
    split: PreparedSplit,
    indices: np.ndarray,
    crop: int,
    mode: RunMode,
    rng: np.random.Generator,
) -> np.ndarray:
    """Crop (and in train mode, randomly offset and flip) the images at `indices` into a `[b,3,crop,crop]` array."""
    images = split.images[indices]
    if mode == RunMode.validate:
        top, left, _ = crop_offsets(images.shape[-2:], crop, AugmentMode.eval, rng)
        return np.ascontiguousarray(images[:, :, top : top + crop, left : left + crop])
    return np.stack([augment_array(image, crop, AugmentMode.train, rng) for image in images])


def run_epoch(
    model_config: ModelConfig,
    params: ParameterSet,
    split: PreparedSplit,
    config: TrainerConfig,
    state: TrainState,
    mode: RunMode,
    rng: np.random.Generator,
    label_scheme: LabelScheme = LabelScheme.ternary,
) -> float:
    """Run one pass over `split` and return the mean per-sample loss.

    Train mode visits the samples in a fresh permutation drawn from `rng`, augments each one, and takes an SGD
    step per batch. Validate mode visits them in order, center-cropped, without dropout, without a graph and
    without touching `params`. The final short batch is kept; class weights always come from the batch itself.

    Raises:
        ParameterError: If the split is empty.
        NumericError: Tagged with the index of the batch that produced a NaN or infinity.
    """
    if len(split) == 0:
        raise ParameterError("cannot run an epoch over an empty split")
    training = mode == RunMode.train
    order = rng.permutation(len(split)) if training else np.arange(len(split))
    total = 0.0
    for batch_index, indices in enumerate(_batches(order, config.batch_size)):
        try:
            images = Tensor(batch_images(split, indices, config.crop_size, mode, rng))
            targets = map_labels(split.raw_labels[indices], label_scheme)
            weights = batch_class_weights(targets)
            if training:
                zero_grads(params)
                _, logits = forward(model_config, params, images, True, rng)
                loss = weighted_ce_loss(logits, targets, weights)
                backward(loss)
                sgd_step(params, state, config)
            else:
                with no_grad():
                    _, logits = forward(model_config, params, images, False, rng)
                    loss = weighted_ce_loss(logits, targets, weights)
        except NumericError as e:
            raise e.with_batch(batch_index) from e
        total += loss.item() * len(indices)
        logger.debug(f"{mode} batch {batch_index}: loss {loss.item():.6f}")
    return total / len(split)


class TrainingResult(AttrNetArrayModel):
    """What `train_two_phase` hands back."""

    best_checkpoint: Checkpoint
    """The state after the epoch with the lowest validation loss."""
    history: tuple[HistoryRow, ...]
    switch_epoch: int | None = None
    """The last epoch of phase 1, or None if the phase never switched."""
    stop_reason: StopReason


def _snapshot(
    model_config: ModelConfig,
    params: ParameterSet,
    state: TrainState,
    config: TrainerConfig,
    rng: np.random.Generator,
    mean_rgb: tuple[float, float, float],
    schema: AttributeSchema | None,
) -> Checkpoint:
    return Checkpoint(
        config=model_config,
        params=parameter_arrays(params),
        momentum={name: buffer.copy() for name, buffer in state.momentum.items()},
        epoch=state.epoch,
        lr=state.lr,
        base_lr=config.base_lr,
        mean_rgb=mean_rgb,
        rng_state=rng.bit_generator.state,
        attribute_schema=schema,
        canonical_size=config.canonical_size,
        crop_size=config.crop_size,
        crop_bbox=config.crop_bbox,
        phase=state.phase,
        best_val_loss=state.best_val_loss,
    )


def train_two_phase(
    model_config: ModelConfig,
    params: ParameterSet,
    train: PreparedSplit,
    val: PreparedSplit,
    config: TrainerConfig,
    *,
    rng: np.random.Generator,
    mean_rgb: tuple[float, float, float],
    schema: AttributeSchema | None = None,
) -> TrainingResult:
    """Train with the freeze/unfreeze protocol and the plateau learning-rate schedule.

    In `two_phase` mode only the fully-connected layers train at first. Once validation loss has not improved
    by `min_delta` for `plateau_patience` epochs, the block holding the finetune boundary and everything after
    it are unfrozen. Later plateaus divide the learning rate by `lr_drop_factor`. Training stops after
    `max_epochs`, or when a drop would exceed `max_lr_drops`. In `full` mode every layer trains throughout and
    every plateau drops the learning rate.

    Args:
        model_config (ModelConfig): The network; its freeze flags are replaced.
        params (ParameterSet): Initialized (or warm-started) parameters, updated in place.
        train (PreparedSplit): The training split.
        val (PreparedSplit): The validation split.
        config (TrainerConfig): Hyperparameters.
        rng (np.random.Generator): The single generator for shuffling, augmentation and dropout.
        mean_rgb (tuple[float, float, float]): Stored in checkpoints for inference.
        schema (AttributeSchema | None, optional): Stored in checkpoints for inference.

    Raises:
        ParameterError: If either split is empty.
    """
    if len(train) == 0 or len(val) == 0:
        raise ParameterError("training needs non-empty train and val splits")
    label_scheme = schema.label_scheme if schema is not None else LabelScheme.ternary
    phase = Phase.phase1 if config.phase_mode == PhaseMode.two_phase else Phase.full
    model_config = set_trainable(model_config, phase)
    mark_trainable(model_config, params)
    state = TrainState(lr=config.base_lr, phase=phase)

    history: list[HistoryRow] = []
    best: Checkpoint | None = None
    switch_epoch: int | None = None
    stop_reason = StopReason.max_epochs

    for epoch in range(1, config.max_epochs + 1):
        state.epoch = epoch
        train_loss = run_epoch(model_config, params, train, config, state, RunMode.train, rng, label_scheme)
        val_loss = run_epoch(model_config, params, val, config, state, RunMode.validate, rng, label_scheme)
        history.append(
            HistoryRow(epoch=epoch, phase=state.phase, lr=state.lr, train_loss=train_loss, val_loss=val_loss),
        )
        logger.info(
            f"epoch {epoch} [{state.phase}, lr {state.lr:g}]: train loss {train_loss:.6f}, val loss {val_loss:.6f}",
        )

        if state.best_val_loss is None or val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            best = _snapshot(model_config, params, state, config, rng, mean_rgb, schema)

        if state.plateau_reference is None or val_loss <= state.plateau_reference - config.min_delta:
            state.plateau_reference = val_loss
            state.epochs_since_improvement = 0
        else:
            state.epochs_since_improvement += 1
        if state.epochs_since_improvement < config.plateau_patience:
            continue

        state.epochs_since_improvement = 0
        if state.phase == Phase.phase1:
            state.phase = Phase.phase2
            switch_epoch = epoch
            model_config = set_trainable(model_config, Phase.phase2)
            mark_trainable(model_config, params)
            logger.info(f"validation loss plateaued; unfreezing from {model_config.finetune_boundary}'s block")
        elif state.lr_drops >= config.max_lr_drops:
            stop_reason = StopReason.lr_floor
            logger.info(f"validation loss plateaued at the lowest learning rate {state.lr:g}; stopping")
            break
        else:
            state.lr_drops += 1
            state.lr = config.lr_for(state.lr_drops)
            logger.info(f"validation loss plateaued; learning rate dropped to {state.lr:g}")

    assert best is not None
    return TrainingResult(
        best_checkpoint=best,
        history=tuple(history),
        switch_epoch=switch_epoch,
        stop_reason=stop_reason,
    )


def history_csv_text(history: tuple[HistoryRow, ...] | list[HistoryRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in history:
        writer.writerow([row.epoch, row.phase, repr(row.lr), repr(row.train_loss), repr(row.val_loss)])
    return buffer.getvalue()


def write_history_csv(history: tuple[HistoryRow, ...] | list[HistoryRow], path: Path | str) -> None:
    """Write `epoch,phase,lr,train_loss,val_loss` rows atomically."""
    atomic_write_text(Path(path), history_csv_text(history))
    logger.info(f"wrote training history {path}")


__all__ = [
    "run_epoch",
    "train_two_phase",
    "TrainingResult",
    "write_history_csv",
    "history_csv_text",
    "batch_images",
]
