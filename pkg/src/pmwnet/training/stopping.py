"""Validation-loss early stopping.

A loss improves on the best so far only if it is strictly lower (by more
than ``min_delta``), so ties keep the earliest epoch.  Training stops once
more than ``patience`` consecutive epochs have failed to improve.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence


@dataclass
class EarlyStopping:
    patience: int = 5
    min_delta: float = 0.0
    best: float = math.inf
    best_epoch: int = 0
    wait: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def update(self, epoch: int, loss: float) -> tuple[bool, bool]:
        """Record ``loss`` for 1-based ``epoch``; returns ``(improved, stop)``."""
        if loss < self.best - self.min_delta:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
            return True, False
        self.wait += 1
        return False, self.wait > self.patience

    def as_dict(self) -> dict:
        d = asdict(self)
        d["best"] = None if math.isinf(self.best) else self.best
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EarlyStopping":
        d = dict(d)
        d["best"] = math.inf if d.get("best") is None else d["best"]
        return cls(**d)


def stopping_point(val_losses: Sequence[float], patience: int = 5, max_epochs: int = 50) -> tuple[int, int]:
    """``(stopped_epoch, best_epoch)`` for a scripted validation-loss sequence.

    Epochs are 1-based.  If the sequence ends before the rule fires, the
    run is taken to end with the sequence (or at ``max_epochs``).
    """
    stopper = EarlyStopping(patience)
    epoch = 0
    for epoch, loss in enumerate(val_losses[:max_epochs], start=1):
        _, stop = stopper.update(epoch, loss)
        if stop:
            break
    return epoch, stopper.best_epoch
