"""Mini-batch BCE training with validation early stopping."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..data.augment import AugmentConfig, augment
from ..data.dataset import ArrayDataset
from ..models.graph import ModelGraph, freeze
from ..models.serialize import load_state
from ..tensor import GradTape, backward, make_rng
from ..tensor.ops import bce_loss, bce_loss_backward
from .optim import OPTIMIZERS, Optimizer, make_optimizer
from .stopping import EarlyStopping

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    momentum: float = 0.9
    seed: int = 0
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    freeze_selector: str | None = None
    eval_batch_size: int = 128

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must all be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {', '.join(OPTIMIZERS)}")
        if isinstance(self.augment, dict):
            a = dict(self.augment)
            if "zoom_range" in a:
                a["zoom_range"] = tuple(a["zoom_range"])
            self.augment = AugmentConfig(**a)

    def make_optimizer(self) -> Optimizer:
        if self.optimizer == "adam":
            return make_optimizer("adam", lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        return make_optimizer("sgd-momentum", lr=self.lr, momentum=self.momentum)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["augment"] is not None:
            d["augment"]["zoom_range"] = list(d["augment"]["zoom_range"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown training option(s): {', '.join(sorted(extra))}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class RunHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    stop_reason: str = ""
    wall_time: float = 0.0

    @property
    def val_losses(self) -> list[float]:
        return [e.val_loss for e in self.epochs]

    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]

    def to_jsonl(self) -> str:
        """One line per epoch and a closing summary line.  Wall time is left
        out so identical runs give identical bytes."""
        lines = [json.dumps(asdict(e), sort_keys=True) for e in self.epochs]
        lines.append(
            json.dumps(
                {"best_epoch": self.best_epoch, "stopped_epoch": self.stopped_epoch, "stop_reason": self.stop_reason},
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunHistory":
        d = dict(d)
        d["epochs"] = [EpochRecord(**e) for e in d.get("epochs", [])]
        return cls(**d)


@dataclass
class TrainState:
    """Everything needed to continue a run after ``epoch`` completed epochs."""

    epoch: int
    optimizer: Optimizer
    stopper: EarlyStopping
    history: RunHistory
    best_weights: dict[str, np.ndarray]


def _check_model(model: ModelGraph) -> None:
    if model.shape_of(model.output) != (1,):
        raise ValueError(f"model must end in a single sigmoid unit, output shape is {model.shape_of(model.output)}")


def predict(model: ModelGraph, x: np.ndarray, batch_size: int = 128) -> np.ndarray:
    """PMW probabilities, shape [N]."""
    out = [model.forward(x[i : i + batch_size], mode="infer").reshape(-1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=model.dtype)


def evaluate(model: ModelGraph, data: ArrayDataset, batch_size: int = 128) -> tuple[float, float]:
    """Mean BCE loss and accuracy (probability >= 0.5 counts as PMW)."""
    probs = predict(model, data.x, batch_size)
    loss, _ = bce_loss(probs.astype(np.float64), data.y)
    acc = float(np.mean((probs >= 0.5) == (data.y == 1)))
    return loss, acc


def train_step(
    model: ModelGraph,
    x: np.ndarray,
    y: np.ndarray,
    optimizer: Optimizer,
    rng: np.random.Generator | None = None,
) -> tuple[float, np.ndarray]:
    """One forward, backward and update on the unfrozen parameters.

    Returns the mean batch loss and the predicted probabilities.
    """
    tape = GradTape(frozenset(model.frozen))
    prob = model.forward(x, mode="train", rng=rng, tape=tape)
    loss, cache = bce_loss(prob, y)
    if math.isfinite(loss):
        grads = backward(tape, model.output, bce_loss_backward(cache))
        optimizer.step(model.parameters(), grads)
    return loss, prob.reshape(-1)


def _augment_batch(x: np.ndarray, idx: np.ndarray, cfg: TrainConfig, epoch: int) -> np.ndarray:
    out = np.empty_like(x)
    for j, i in enumerate(idx):
        out[j] = augment(x[j], cfg.augment, seed=cfg.seed, index=int(i), epoch=epoch)
    return out


def train(
    model: ModelGraph,
    train_set: ArrayDataset,
    val_set: ArrayDataset,
    cfg: TrainConfig = TrainConfig(),
    *,
    resume_from: TrainState | None = None,
    on_epoch_end: Callable[[TrainState, ModelGraph], None] | None = None,
    stop_after: int | None = None,
) -> tuple[dict[str, np.ndarray], RunHistory]:
    """Train until ``cfg.max_epochs`` or early stopping, then restore the
    weights of the best validation epoch into ``model`` and return them.

    Batches are shuffled per epoch, augmentation (training split only) is
    redrawn per epoch, and every random draw is keyed on ``(seed, epoch,
    batch)`` so a resumed run continues exactly.  ``on_epoch_end`` is called
    after each epoch (used for checkpointing); ``stop_after`` interrupts the
    run after that epoch without restoring the best weights.
    """
    _check_model(model)
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if cfg.freeze_selector:
        freeze(model, cfg.freeze_selector)

    if resume_from is None:
        state = TrainState(0, cfg.make_optimizer(), EarlyStopping(cfg.patience), RunHistory(), {})
    else:
        state = resume_from
    hist = state.history
    t0 = time.perf_counter() - hist.wall_time
    n = len(train_set)

    while state.epoch < cfg.max_epochs and not hist.stop_reason:
        epoch = state.epoch + 1
        order = make_rng(cfg.seed, "shuffle", epoch).permutation(n)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            x = train_set.x[idx]
            if cfg.augment is not None:
                x = _augment_batch(x, idx, cfg, epoch)
            y = train_set.y[idx]
            loss, prob = train_step(model, x, y, state.optimizer, make_rng(cfg.seed, "dropout", epoch, b))
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {b}")
            loss_sum += loss * len(idx)
            correct += int(np.sum((prob >= 0.5) == (y == 1)))
        val_loss, val_acc = evaluate(model, val_set, cfg.eval_batch_size)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        hist.epochs.append(EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc))
        improved, stop = state.stopper.update(epoch, val_loss)
        if improved:
            state.best_weights = {k: v.copy() for k, v in model.state().items()}
        hist.best_epoch = state.stopper.best_epoch
        hist.stopped_epoch = epoch
        if stop:
            hist.stop_reason = "early_stopping"
        elif epoch == cfg.max_epochs:
            hist.stop_reason = "max_epochs"
        state.epoch = epoch
        hist.wall_time = time.perf_counter() - t0
        log.info(
            "epoch %d train_loss %.4f val_loss %.4f val_acc %.4f%s",
            epoch, loss_sum / n, val_loss, val_acc, " *" if improved else "",
        )
        if on_epoch_end is not None:
            on_epoch_end(state, model)
        if stop_after is not None and epoch >= stop_after and not hist.stop_reason:
            return state.best_weights, hist

    load_state(model, state.best_weights)
    return state.best_weights, hist
