"""SGD training with the two-phase freeze/unfreeze protocol."""
from attrnet.trainer.config import HistoryRow, StopReason, TrainerConfig, TrainState
from attrnet.trainer.loop import TrainingResult, run_epoch, train_two_phase, write_history_csv
from attrnet.trainer.optim import sgd_step

__all__ = [
    "TrainerConfig",
    "TrainState",
    "HistoryRow",
    "StopReason",
    "sgd_step",
    "run_epoch",
    "train_two_phase",
    "TrainingResult",
    "write_history_csv",
]
