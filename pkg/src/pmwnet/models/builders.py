"""Architecture builders.

Full-scale graphs (``vgg16``, ``resnet50``, ``inception_v3``) reproduce the
canonical layouts and are forward-runnable; the desk-scale ``*_s``
variants keep each family's defining motif at a size that trains on a CPU:

* ``vgg_s``: two blocks of two 3x3 convs, each followed by 2x2 max pooling.
* ``resnet_s``: conv stem, then two stages of two basic residual blocks.
* ``inception_s``: conv stem, then two inception modules.

Backbone nodes are prefixed with the family name, head nodes with ``head/``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import GraphError, ModelGraph
from .layers import (
    Add,
    AvgPool,
    BatchNorm,
    Concat,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    MaxPool,
    ReLU,
    Sigmoid,
)

DESK_INPUT = (3, 32, 32)


@dataclass(frozen=True)
class HeadConfig:
    pool: str = "global"  # "global" or "window"
    pool_window: int = 2
    hidden_width: int = 256
    dropout_rate: float = 0.30

    def __post_init__(self):
        if self.pool not in ("global", "window"):
            raise ValueError(f"head pool must be 'global' or 'window', got {self.pool!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")


@dataclass(frozen=True)
class DeskConfig:
    """Width settings for the desk-scale variants."""

    width: int = 16
    seed: int = 0
    dtype: str = "float32"


def attach_head(backbone: ModelGraph, cfg: HeadConfig | None = None) -> ModelGraph:
    """Append pool -> flatten -> dense+ReLU -> dropout -> dense(1)+sigmoid."""
    cfg = cfg or HeadConfig()
    if backbone.head_nodes:
        raise GraphError("model already has a head attached")
    if len(backbone.shape_of(backbone.output)) != 3:
        raise GraphError(f"head expects a [C,H,W] backbone output, got {backbone.shape_of(backbone.output)}")
    start = len(backbone.nodes)
    if cfg.pool == "global":
        backbone.add("head/avgpool", GlobalAvgPool())
    else:
        _, h, w = backbone.shape_of(backbone.output)
        k = min(cfg.pool_window, h, w)
        backbone.add("head/avgpool", AvgPool(k, k))
    backbone.add("head/flatten", Flatten())
    backbone.add("head/dense", Dense(cfg.hidden_width, init="kaiming"))
    backbone.add("head/relu", ReLU())
    backbone.add("head/dropout", Dropout(cfg.dropout_rate))
    backbone.add("head/out", Dense(1, init="xavier"))
    backbone.add("head/sigmoid", Sigmoid())
    backbone.head_nodes = tuple(list(backbone.nodes)[start:])
    return backbone


def _conv_bn_relu(g, name, src, filters, kernel, stride=1, padding=0, relu=True, role=""):
    g.add(f"{name}/conv", Conv2D(filters, kernel, stride, padding, bias=False), src, role=role)
    out = g.add(f"{name}/bn", BatchNorm(), role=role)
    if relu:
        out = g.add(f"{name}/relu", ReLU())
    return out


def _same(k):
    if isinstance(k, tuple):
        return (k[0] // 2, k[1] // 2)
    return k // 2


# ------------------------------------------------------------------------ VGG


def _vgg(g, prefix, blocks):
    out = "input"
    for b, (n_conv, filters) in enumerate(blocks, start=1):
        for i in range(1, n_conv + 1):
            g.add(f"{prefix}/block{b}_conv{i}", Conv2D(filters, 3, 1, 1), out)
            out = g.add(f"{prefix}/block{b}_relu{i}", ReLU())
        out = g.add(f"{prefix}/block{b}_pool", MaxPool(2, 2))
    return out


def build_vgg16(input_shape=(3, 224, 224), include_top=True, seed=0, dtype=np.float32) -> ModelGraph:
    """13 conv layers in five blocks plus, with ``include_top``, 3 dense layers."""
    g = ModelGraph(input_shape, seed, dtype)
    _vgg(g, "vgg16", [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)])
    if include_top:
        g.add("vgg16/flatten", Flatten())
        g.add("vgg16/fc1", Dense(4096))
        g.add("vgg16/fc1_relu", ReLU())
        g.add("vgg16/fc2", Dense(4096))
        g.add("vgg16/fc2_relu", ReLU())
        g.add("vgg16/predictions", Dense(1, init="xavier"))
        g.add("vgg16/sigmoid", Sigmoid())
    return g


def build_vgg_s(input_shape=DESK_INPUT, cfg: DeskConfig | None = None, head: HeadConfig | None = HeadConfig()):
    cfg = cfg or DeskConfig()
    w = cfg.width
    g = ModelGraph(input_shape, cfg.seed, cfg.dtype)
    _vgg(g, "vgg_s", [(2, w), (2, 2 * w)])
    return attach_head(g, head) if head is not None else g


# --------------------------------------------------------------------- ResNet


def basic_block(g: ModelGraph, name: str, src: str, filters: int, stride: int = 1, project: bool | None = None) -> str:
    """Two 3x3 conv-BN layers plus a shortcut, then ReLU."""
    in_c = g.shape_of(src)[0]
    if project is None:
        project = stride != 1 or in_c != filters
    _conv_bn_relu(g, f"{name}/a", src, filters, 3, stride, 1)
    main = _conv_bn_relu(g, f"{name}/b", g.output, filters, 3, 1, 1, relu=False)
    shortcut = src
    if project:
        shortcut = _conv_bn_relu(g, f"{name}/proj", src, filters, 1, stride, 0, relu=False, role="shortcut")
    elif g.shape_of(src) != g.shape_of(main):
        raise GraphError(
            f"block {name!r}: identity shortcut shape {g.shape_of(src)} != residual shape {g.shape_of(main)}; "
            "a projection shortcut is required"
        )
    g.add(f"{name}/add", Add(), (main, shortcut))
    out = g.add(f"{name}/relu", ReLU())
    g.modules[name] = {"input": src, "output": out, "kind": "basic"}
    return out


def bottleneck_block(g: ModelGraph, name: str, src: str, filters: int, stride: int = 1, project: bool | None = None) -> str:
    """1x1 reduce, 3x3, 1x1 expand (x4) with a shortcut, then ReLU."""
    in_c = g.shape_of(src)[0]
    if project is None:
        project = stride != 1 or in_c != 4 * filters
    _conv_bn_relu(g, f"{name}/a", src, filters, 1, stride, 0)
    _conv_bn_relu(g, f"{name}/b", g.output, filters, 3, 1, 1)
    main = _conv_bn_relu(g, f"{name}/c", g.output, 4 * filters, 1, 1, 0, relu=False)
    shortcut = src
    if project:
        shortcut = _conv_bn_relu(g, f"{name}/proj", src, 4 * filters, 1, stride, 0, relu=False, role="shortcut")
    elif g.shape_of(src) != g.shape_of(main):
        raise GraphError(
            f"block {name!r}: identity shortcut shape {g.shape_of(src)} != residual shape {g.shape_of(main)}; "
            "a projection shortcut is required"
        )
    g.add(f"{name}/add", Add(), (main, shortcut))
    out = g.add(f"{name}/relu", ReLU())
    g.modules[name] = {"input": src, "output": out, "kind": "bottleneck"}
    return out


def build_resnet50(input_shape=(3, 224, 224), include_top=True, seed=0, dtype=np.float32) -> ModelGraph:
    """Conv stem, bottleneck stages of 3-4-6-3 blocks, and a dense top: 50 weighted layers."""
    g = ModelGraph(input_shape, seed, dtype)
    _conv_bn_relu(g, "resnet50/stem", "input", 64, 7, 2, 3)
    out = g.add("resnet50/stem/pool", MaxPool(3, 2, 1))
    for stage, (blocks, filters) in enumerate([(3, 64), (4, 128), (6, 256), (3, 512)], start=2):
        for b in range(blocks):
            stride = 2 if b == 0 and stage > 2 else 1
            out = bottleneck_block(g, f"resnet50/conv{stage}_block{b + 1}", out, filters, stride)
    if include_top:
        g.add("resnet50/avgpool", GlobalAvgPool())
        g.add("resnet50/predictions", Dense(1, init="xavier"))
        g.add("resnet50/sigmoid", Sigmoid())
    return g


def build_resnet_s(input_shape=DESK_INPUT, cfg: DeskConfig | None = None, head: HeadConfig | None = HeadConfig()):
    cfg = cfg or DeskConfig()
    w = cfg.width
    g = ModelGraph(input_shape, cfg.seed, cfg.dtype)
    _conv_bn_relu(g, "resnet_s/stem", "input", w, 3, 1, 1)
    out = g.add("resnet_s/stem/pool", MaxPool(2, 2))
    for stage, filters in enumerate([w, 2 * w], start=1):
        for b in range(2):
            stride = 2 if b == 0 and stage > 1 else 1
            out = basic_block(g, f"resnet_s/stage{stage}_block{b + 1}", out, filters, stride)
    return attach_head(g, head) if head is not None else g


# ------------------------------------------------------------------ Inception


def inception_module(g: ModelGraph, name: str, src: str, b1: int, b3: tuple[int, int], b5: tuple[int, int], bp: int) -> str:
    """Parallel 1x1, 1x1->3x3, 1x1->5x5 and 3x3-maxpool->1x1 branches, concatenated on channels."""
    br1 = _conv_bn_relu(g, f"{name}/1x1", src, b1, 1)
    _conv_bn_relu(g, f"{name}/3x3_reduce", src, b3[0], 1)
    br3 = _conv_bn_relu(g, f"{name}/3x3", g.output, b3[1], 3, 1, 1)
    _conv_bn_relu(g, f"{name}/5x5_reduce", src, b5[0], 1)
    br5 = _conv_bn_relu(g, f"{name}/5x5", g.output, b5[1], 5, 1, 2)
    g.add(f"{name}/pool", MaxPool(3, 1, 1), src)
    brp = _conv_bn_relu(g, f"{name}/pool_proj", g.output, bp, 1)
    out = g.add(f"{name}/concat", Concat(), (br1, br3, br5, brp))
    g.modules[name] = {"input": src, "output": out, "branches": [br1, br3, br5, brp], "kind": "inception"}
    return out


def build_inception_s(input_shape=DESK_INPUT, cfg: DeskConfig | None = None, head: HeadConfig | None = HeadConfig()):
    cfg = cfg or DeskConfig()
    w = cfg.width
    g = ModelGraph(input_shape, cfg.seed, cfg.dtype)
    _conv_bn_relu(g, "inception_s/stem", "input", w, 3, 1, 1)
    out = g.add("inception_s/stem/pool", MaxPool(2, 2))
    out = inception_module(g, "inception_s/mixed1", out, w, (w, w), (w // 2, w // 2), w // 2)
    out = g.add("inception_s/pool1", MaxPool(2, 2))
    out = inception_module(g, "inception_s/mixed2", out, 2 * w, (w, 2 * w), (w // 2, w), w)
    return attach_head(g, head) if head is not None else g


def _branch_concat(g, name, src, branches):
    outs = [fn(f"{name}/b{i}", src) for i, fn in enumerate(branches)]
    out = g.add(f"{name}/concat", Concat(), outs)
    g.modules[name] = {"input": src, "output": out, "branches": outs, "kind": "inception"}
    return out


def build_inception_v3(input_shape=(3, 299, 299), include_top=True, seed=0, dtype=np.float32) -> ModelGraph:
    """InceptionV3 layout: factorised stem, 3x module A, reduction, 4x module C
    (7x1/1x7 factorisation), reduction, 2x module E, dense top."""
    g = ModelGraph(input_shape, seed, dtype)
    p = "inception_v3"

    def cbr(name, src, f, k, s=1, pad="valid"):
        padding = _same(k) if pad == "same" else 0
        return _conv_bn_relu(g, name, src, f, k, s, padding)

    def chain(steps):
        def run(name, src):
            out = src
            for i, (f, k, s, pad) in enumerate(steps):
                out = cbr(f"{name}_{i}", out, f, k, s, pad)
            return out

        return run

    def pooled(kind, f=None, stride=1, pad=1):
        def run(name, src):
            layer = AvgPool(3, stride, pad) if kind == "avg" else MaxPool(3, stride, pad)
            out = g.add(f"{name}_pool", layer, src)
            if f is not None:
                out = cbr(f"{name}_proj", out, f, 1)
            return out

        return run

    out = cbr(f"{p}/conv1", "input", 32, 3, 2)
    out = cbr(f"{p}/conv2", out, 32, 3)
    out = cbr(f"{p}/conv3", out, 64, 3, 1, "same")
    out = g.add(f"{p}/pool1", MaxPool(3, 2))
    out = cbr(f"{p}/conv4", out, 80, 1)
    out = cbr(f"{p}/conv5", out, 192, 3)
    out = g.add(f"{p}/pool2", MaxPool(3, 2))

    for i, pool_f in enumerate([32, 64, 64]):
        out = _branch_concat(g, f"{p}/mixed{i}", out, [
            chain([(64, 1, 1, "same")]),
            chain([(48, 1, 1, "same"), (64, 5, 1, "same")]),
            chain([(64, 1, 1, "same"), (96, 3, 1, "same"), (96, 3, 1, "same")]),
            pooled("avg", pool_f),
        ])
    out = _branch_concat(g, f"{p}/mixed3", out, [
        chain([(384, 3, 2, "valid")]),
        chain([(64, 1, 1, "same"), (96, 3, 1, "same"), (96, 3, 2, "valid")]),
        pooled("max", None, 2, 0),
    ])
    for i, c7 in enumerate([128, 160, 160, 192], start=4):
        out = _branch_concat(g, f"{p}/mixed{i}", out, [
            chain([(192, 1, 1, "same")]),
            chain([(c7, 1, 1, "same"), (c7, (1, 7), 1, "same"), (192, (7, 1), 1, "same")]),
            chain([
                (c7, 1, 1, "same"), (c7, (7, 1), 1, "same"), (c7, (1, 7), 1, "same"),
                (c7, (7, 1), 1, "same"), (192, (1, 7), 1, "same"),
            ]),
            pooled("avg", 192),
        ])
    out = _branch_concat(g, f"{p}/mixed8", out, [
        chain([(192, 1, 1, "same"), (320, 3, 2, "valid")]),
        chain([(192, 1, 1, "same"), (192, (1, 7), 1, "same"), (192, (7, 1), 1, "same"), (192, 3, 2, "valid")]),
        pooled("max", None, 2, 0),
    ])
    def split(first):
        def run(name, src):
            stem = src
            for j, (f, k) in enumerate(first):
                stem = cbr(f"{name}_{j}", stem, f, k, 1, "same")
            a = cbr(f"{name}_1x3", stem, 384, (1, 3), 1, "same")
            b = cbr(f"{name}_3x1", stem, 384, (3, 1), 1, "same")
            return g.add(f"{name}_concat", Concat(), (a, b))

        return run

    for i in (9, 10):
        out = _branch_concat(g, f"{p}/mixed{i}", out, [
            chain([(320, 1, 1, "same")]),
            split([(384, 1)]),
            split([(448, 1), (384, 3)]),
            pooled("avg", 192),
        ])
    if include_top:
        g.add(f"{p}/avgpool", GlobalAvgPool())
        g.add(f"{p}/predictions", Dense(1, init="xavier"))
        g.add(f"{p}/sigmoid", Sigmoid())
    return g


ARCHITECTURES = {
    "vgg_s": build_vgg_s,
    "resnet_s": build_resnet_s,
    "inception_s": build_inception_s,
    "vgg16": build_vgg16,
    "resnet50": build_resnet50,
    "inception_v3": build_inception_v3,
}

DESK_ARCHITECTURES = ("vgg_s", "resnet_s", "inception_s")


def build(arch: str, input_shape=None, width: int = 16, seed: int = 0, head: HeadConfig | None = HeadConfig(), dtype="float32"):
    """Build any architecture by name; full-scale backbones get the fine-tuning head too."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; choose from {', '.join(ARCHITECTURES)}")
    if arch in DESK_ARCHITECTURES:
        shape = input_shape or DESK_INPUT
        return ARCHITECTURES[arch](shape, DeskConfig(width, seed, dtype), head)
    shape = input_shape or ((3, 299, 299) if arch == "inception_v3" else (3, 224, 224))
    g = ARCHITECTURES[arch](shape, include_top=False, seed=seed, dtype=dtype)
    return attach_head(g, head) if head is not None else g
