"""Training loop, optimizers, early stopping, checkpoints and transfer learning."""

from .checkpoint import checkpoint, resume
from .loop import (
    EpochRecord,
    NumericalError,
    RunHistory,
    TrainConfig,
    TrainState,
    evaluate,
    predict,
    train,
    train_step,
)
from .optim import OPTIMIZERS, Adam, Optimizer, SGDMomentum, make_optimizer
from .stopping import EarlyStopping, stopping_point
from .transfer import ArmResult, TransferReport, backbone_state, pretrain_transfer

__all__ = [
    "Adam",
    "ArmResult",
    "EarlyStopping",
    "EpochRecord",
    "NumericalError",
    "OPTIMIZERS",
    "Optimizer",
    "RunHistory",
    "SGDMomentum",
    "TrainConfig",
    "TrainState",
    "TransferReport",
    "backbone_state",
    "checkpoint",
    "evaluate",
    "make_optimizer",
    "predict",
    "pretrain_transfer",
    "resume",
    "stopping_point",
    "train",
    "train_step",
]
