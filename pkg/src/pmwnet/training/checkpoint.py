"""Run checkpoints: a weight file plus a JSON sidecar.

The weight file holds the model's current parameters and buffers in the
regular weight format.  The sidecar (``<path>.json``) holds the history,
early-stopping state, config echo, optimizer hyperparameters and step
count; optimizer slot buffers and the best-epoch weights are embedded as
base64 weight-format blobs so resuming is bit-exact.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

from ..models.graph import ModelGraph
from ..models.serialize import decode, encode, load_weights, save_weights
from .loop import RunHistory, TrainConfig, TrainState
from .optim import make_optimizer
from .stopping import EarlyStopping

CHECKPOINT_VERSION = 1


def _blob(tensors) -> str:
    return base64.b64encode(encode(tensors)).decode("ascii")


def _unblob(text: str):
    return decode(base64.b64decode(text))


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def checkpoint(model: ModelGraph, path, state: TrainState, cfg: TrainConfig) -> None:
    save_weights(model, path)
    opt = state.optimizer
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "frozen": sorted(model.frozen),
        "history": state.history.as_dict(),
        "stopper": state.stopper.as_dict(),
        "optimizer": {"kind": opt.kind, "hyper": opt.hyper(), "t": opt.t, "slots": _blob(opt.tensors())},
        "best_weights": _blob(state.best_weights),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))


def resume(path, model: ModelGraph) -> tuple[TrainState, TrainConfig]:
    """Load a checkpoint into ``model`` and rebuild the training state."""
    meta = json.loads(sidecar_path(path).read_text())
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{sidecar_path(path)}: unsupported checkpoint version {meta.get('checkpoint_version')!r}")
    load_weights(path, model)
    model.frozen.clear()
    model.frozen.update(meta["frozen"])
    o = meta["optimizer"]
    opt = make_optimizer(o["kind"], **o["hyper"])
    opt.t = o["t"]
    opt.load_tensors(_unblob(o["slots"]))
    state = TrainState(
        epoch=meta["epoch"],
        optimizer=opt,
        stopper=EarlyStopping.from_dict(meta["stopper"]),
        history=RunHistory.from_dict(meta["history"]),
        best_weights=_unblob(meta["best_weights"]),
    )
    return state, TrainConfig.from_dict(meta["config"])
