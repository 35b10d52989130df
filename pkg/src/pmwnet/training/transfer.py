"""Pretrain on a source task, then fine-tune a frozen backbone on the target."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..data.dataset import ArrayDataset
from ..models.graph import ModelGraph, freeze
from ..models.serialize import decode, encode, load_state, tensors_checksum
from .loop import RunHistory, TrainConfig, evaluate, train

log = logging.getLogger(__name__)


def backbone_state(model: ModelGraph) -> dict[str, np.ndarray]:
    """Parameters and buffers of every node outside the head."""
    head = set(model.head_nodes)
    return {k: v for k, v in model.state().items() if k.rpartition(".")[0] not in head}


@dataclass
class ArmResult:
    name: str
    history: RunHistory
    val_accuracy: float
    val_loss: float
    test_accuracy: float | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "val_accuracy": self.val_accuracy,
            "val_loss": self.val_loss,
            "test_accuracy": self.test_accuracy,
            "best_epoch": self.history.best_epoch,
            "stopped_epoch": self.history.stopped_epoch,
        }


@dataclass
class TransferReport:
    source: ArmResult
    pretrained: ArmResult
    random: ArmResult
    frozen_fraction: float
    backbone_checksum: str
    backbone_unchanged: bool
    extra: dict = field(default_factory=dict)

    @property
    def pretrained_wins(self) -> bool:
        return self.pretrained.val_accuracy >= self.random.val_accuracy

    def as_dict(self) -> dict:
        return {
            "source": self.source.as_dict(),
            "pretrained": self.pretrained.as_dict(),
            "random": self.random.as_dict(),
            "frozen_fraction": self.frozen_fraction,
            "backbone_checksum": self.backbone_checksum,
            "backbone_unchanged": self.backbone_unchanged,
            "pretrained_wins": self.pretrained_wins,
        }


def _arm(name, model, train_set, val_set, cfg, test_set) -> ArmResult:
    _, hist = train(model, train_set, val_set, cfg)
    val_loss, val_acc = evaluate(model, val_set, cfg.eval_batch_size)
    test_acc = evaluate(model, test_set, cfg.eval_batch_size)[1] if test_set is not None else None
    log.info("%s arm: val_acc %.4f test_acc %s", name, val_acc, test_acc)
    return ArmResult(name, hist, val_acc, val_loss, test_acc)


def pretrain_transfer(
    build_model: Callable[[], ModelGraph],
    source: tuple[ArrayDataset, ArrayDataset],
    target: tuple[ArrayDataset, ArrayDataset],
    cfg: TrainConfig = TrainConfig(),
    source_cfg: TrainConfig | None = None,
    target_test: ArrayDataset | None = None,
    backbone_path=None,
) -> TransferReport:
    """Compare a pretrained, frozen backbone against random initialization.

    ``build_model`` must return a freshly initialised backbone+head model
    and is called once per arm, so both target arms start from identical
    head weights.  The source model is trained with ``source_cfg`` (default
    ``cfg``), its backbone serialized (to ``backbone_path`` if given), then
    loaded into a fresh model whose backbone is frozen before fine-tuning.
    The random arm trains every parameter from scratch with ``cfg``.
    """
    cfg = replace(cfg, freeze_selector=None)
    source_cfg = replace(source_cfg or cfg, freeze_selector=None)

    src_model = build_model()
    src = _arm("source", src_model, source[0], source[1], source_cfg, None)
    blob = encode(backbone_state(src_model))
    if backbone_path is not None:
        with open(backbone_path, "wb") as fh:
            fh.write(blob)

    model = build_model()
    report = load_state(model, decode(blob), allow_partial=True)
    if report.skipped:
        raise ValueError(f"backbone file has names the model lacks: {report.skipped[:3]}")
    fr = freeze(model, "backbone")
    before = tensors_checksum(backbone_state(model))
    pre = _arm("pretrained", model, target[0], target[1], cfg, target_test)
    after = tensors_checksum(backbone_state(model))

    rnd = _arm("random", build_model(), target[0], target[1], cfg, target_test)
    return TransferReport(src, pre, rnd, fr.fraction, before, before == after)
