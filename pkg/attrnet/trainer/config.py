"""Trainer configuration, mutable training state and per-epoch history rows."""
from __future__ import annotations

import numpy as np
from pydantic import Field, model_validator
from strenum import StrEnum
from typing_extensions import Self

from attrnet.consts import DEFAULT_CANONICAL_SIZE, DEFAULT_CROP_SIZE, Phase, PhaseMode
from attrnet.generic.models import AttrNetModel, AttrNetMutableModel


class StopReason(StrEnum):
    max_epochs = "max_epochs"
    lr_floor = "lr_floor"
    """The next learning-rate drop would take the rate below `base_lr / lr_drop_factor**max_lr_drops`."""


class TrainerConfig(AttrNetModel):
    """Optimization hyperparameters. Defaults are the published ones, at desk-scale image sizes."""

    batch_size: int = Field(default=32, ge=1)
    base_lr: float = Field(default=0.001, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=0.0005, ge=0)
    dropout_rate: float = Field(default=0.5, ge=0, lt=1)
    lr_drop_factor: float = Field(default=10.0, gt=1)
    plateau_patience: int = Field(default=3, ge=1)
    """Epochs without validation improvement before switching phase or dropping the learning rate."""
    min_delta: float = Field(default=1e-4, ge=0)
    """The smallest decrease of validation loss that counts as an improvement."""
    max_lr_drops: int = Field(default=4, ge=0)
    max_epochs: int = Field(default=38, ge=1)
    phase_mode: PhaseMode = PhaseMode.two_phase
    canonical_size: int = Field(default=DEFAULT_CANONICAL_SIZE, ge=1)
    crop_size: int = Field(default=DEFAULT_CROP_SIZE, ge=1)
    crop_bbox: bool = False
    """Train and validate on bbox crops (with a 10% margin) instead of whole images."""
    seed: int | str = 0
    max_workers: int | None = Field(default=None, ge=1)
    """Threads used for preprocessing."""

    @model_validator(mode="after")
    def crop_fits(self) -> Self:
        if self.crop_size > self.canonical_size:
            raise ValueError(f"crop_size {self.crop_size} exceeds canonical_size {self.canonical_size}")
        return self

    def lr_for(self, drops: int) -> float:
        """The learning rate after `drops` plateau drops."""
        return self.base_lr / self.lr_drop_factor**drops


class TrainState(AttrNetMutableModel):
    """Everything the trainer updates between steps and epochs."""

    epoch: int = 0
    lr: float
    lr_drops: int = 0
    """`lr == base_lr / lr_drop_factor**lr_drops`."""
    momentum: dict[str, np.ndarray] = Field(default_factory=dict)
    best_val_loss: float | None = None
    plateau_reference: float | None = None
    """The validation loss later epochs must beat by `min_delta` to count as improving."""
    epochs_since_improvement: int = 0
    phase: Phase = Phase.phase1


class HistoryRow(AttrNetModel):
    epoch: int
    phase: Phase
    lr: float
    train_loss: float
    val_loss: float


__all__ = [
    "StopReason",
    "TrainerConfig",
    "TrainState",
    "HistoryRow",
]
