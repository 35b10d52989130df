"""Directed acyclic layer graphs with named, freezable parameters."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..tensor import GradTape, ShapeError, make_rng
from .layers import BatchNorm, Layer

INPUT = "input"


class GraphError(ValueError):
    pass


@dataclass
class Node:
    name: str
    layer: Layer
    inputs: tuple[str, ...]
    shape: tuple


@dataclass
class ModelGraph:
    """Layers wired as a DAG with a single input and a single output.

    Nodes are kept in insertion order, and :meth:`add` only accepts inputs
    that already exist, so insertion order is a topological order.
    Parameters are addressed as ``"<node>.<param>"``.
    """

    input_shape: tuple
    seed: int = 0
    dtype: type = np.float32
    nodes: dict[str, Node] = field(default_factory=dict)
    frozen: set[str] = field(default_factory=set)
    output: str = INPUT
    head_nodes: tuple[str, ...] = ()
    modules: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.dtype = np.dtype(self.dtype).type

    # ------------------------------------------------------------ building

    def shape_of(self, name: str) -> tuple:
        if name == INPUT:
            return self.input_shape
        return self.nodes[name].shape

    def add(self, name: str, layer: Layer, inputs: str | Iterable[str] | None = None, role: str = "") -> str:
        if name == INPUT or name in self.nodes:
            raise GraphError(f"duplicate node name {name!r}")
        if "." in name:
            raise GraphError(f"node names may not contain '.': {name!r}")
        if inputs is None:
            inputs = (self.output,)
        elif isinstance(inputs, str):
            inputs = (inputs,)
        inputs = tuple(inputs)
        for src in inputs:
            if src != INPUT and src not in self.nodes:
                raise GraphError(f"node {name!r} reads unknown input {src!r}")
        rng = make_rng(self.seed, "init", len(self.nodes))
        try:
            shape = tuple(layer.build([self.shape_of(s) for s in inputs], rng, self.dtype))
        except ShapeError as exc:
            raise ShapeError(f"node {name!r}: {exc}") from exc
        layer.role = role
        self.nodes[name] = Node(name, layer, inputs, shape)
        self.output = name
        return name

    # ---------------------------------------------------------- parameters

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{n.name}.{k}": v for n in self.nodes.values() for k, v in n.layer.params.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{n.name}.{k}": v for n in self.nodes.values() for k, v in n.layer.buffers.items()}

    def state(self) -> dict[str, np.ndarray]:
        """All persistent tensors: parameters then buffers, in node order."""
        out = {}
        for n in self.nodes.values():
            for k, v in n.layer.params.items():
                out[f"{n.name}.{k}"] = v
            for k, v in n.layer.buffers.items():
                out[f"{n.name}.{k}"] = v
        return out

    def set_tensor(self, full_name: str, value: np.ndarray) -> None:
        node_name, _, key = full_name.rpartition(".")
        layer = self.nodes[node_name].layer
        store = layer.params if key in layer.params else layer.buffers
        if key not in store:
            raise KeyError(full_name)
        store[key] = value

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.parameters().items() if k not in self.frozen}

    def param_count(self, names: Iterable[str] | None = None) -> int:
        params = self.parameters()
        keys = params if names is None else names
        return int(sum(params[k].size for k in keys))

    def layers_of(self, kind: str) -> list[Node]:
        return [n for n in self.nodes.values() if n.layer.kind == kind]

    def weighted_layer_count(self) -> int:
        """Conv and dense layers on the main path (projection shortcuts excluded)."""
        return sum(1 for n in self.nodes.values() if n.layer.weighted and n.layer.role != "shortcut")

    def _node_frozen(self, node: Node) -> bool:
        names = [f"{node.name}.{k}" for k in node.layer.params]
        return bool(names) and all(k in self.frozen for k in names)

    # ------------------------------------------------------------- running

    def forward(
        self,
        x: np.ndarray,
        mode: str = "infer",
        rng: np.random.Generator | None = None,
        tape: GradTape | None = None,
        outputs: Iterable[str] | None = None,
    ):
        """Run the graph on a batch ``x`` of shape ``[N, *input_shape]``.

        Returns the output array, or a dict of arrays if ``outputs`` names
        specific nodes.  In ``train`` mode batchnorm running statistics are
        updated, except for fully frozen batchnorm layers, which always run
        with their stored statistics.  When ``tape`` is given every op is
        recorded for :func:`pmwnet.tensor.backward`.
        """
        if mode not in ("train", "infer"):
            raise ValueError(f"unknown mode {mode!r}")
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"model expects input [N, {', '.join(map(str, self.input_shape))}], got {list(x.shape)}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        wanted = set(outputs) if outputs is not None else {self.output}
        consumers: dict[str, int] = {}
        for node in self.nodes.values():
            for src in node.inputs:
                consumers[src] = consumers.get(src, 0) + 1
        values = {INPUT: x}
        kept = {}
        for node in self.nodes.values():
            layer_mode = mode
            if mode == "train" and isinstance(node.layer, BatchNorm) and self._node_frozen(node):
                layer_mode = "infer"
            out, cache = node.layer.forward([values[s] for s in node.inputs], layer_mode, rng)
            if layer_mode == "train" and hasattr(node.layer, "update_state"):
                node.layer.update_state(cache)
            if tape is not None:
                tape.record(node.inputs, node.name, self._backward_fn(node, cache))
            values[node.name] = out
            if node.name in wanted:
                kept[node.name] = out
            if tape is None:
                # release activations nobody else reads
                for src in node.inputs:
                    consumers[src] -= 1
                    if consumers[src] == 0 and src not in wanted:
                        values.pop(src, None)
        if INPUT in wanted:
            kept[INPUT] = x
        if outputs is None:
            return kept[self.output]
        return kept

    @staticmethod
    def _backward_fn(node: Node, cache) -> Callable:
        def fn(dout):
            dinputs, dparams = node.layer.backward(dout, cache)
            return dinputs, {f"{node.name}.{k}": g for k, g in dparams.items()}

        return fn

    def subgraph(self, start: str, end: str) -> "ModelGraph":
        """A new graph sharing this graph's layers, computing ``end`` from ``start``.

        Every node between the two must depend only on ``start`` or on other
        nodes in the range.
        """
        names = list(self.nodes)
        lo = 0 if start == INPUT else names.index(start) + 1
        hi = names.index(end) + 1
        needed = {end}
        for name in reversed(names[lo:hi]):
            if name in needed:
                needed.update(s for s in self.nodes[name].inputs if s != start)
        sub = ModelGraph(self.shape_of(start), self.seed, self.dtype)
        for name in names[lo:hi]:
            if name not in needed:
                continue
            node = self.nodes[name]
            inputs = tuple(INPUT if s == start else s for s in node.inputs)
            for s in inputs:
                if s != INPUT and s not in sub.nodes:
                    raise GraphError(f"node {name!r} depends on {s!r} outside the range")
            sub.nodes[name] = Node(name, node.layer, inputs, node.shape)
            sub.output = name
        sub.frozen = {k for k in self.frozen if k.split(".")[0] in sub.nodes}
        return sub

    def summary(self) -> str:
        lines = []
        for n in self.nodes.values():
            count = sum(v.size for v in n.layer.params.values())
            lines.append(f"{n.name:40s} {n.layer!r:50s} {str(n.shape):18s} {count}")
        lines.append(f"total parameters: {self.param_count()}")
        return "\n".join(lines)


@dataclass
class FreezeReport:
    matched: list[str]
    total: int

    @property
    def fraction(self) -> float:
        return len(self.matched) / self.total if self.total else 0.0


def _selector_fn(model: ModelGraph, selector) -> Callable[[str], bool]:
    if callable(selector):
        return selector
    if selector == "backbone":
        head = set(model.head_nodes)
        return lambda name: name.split(".")[0] not in head
    if isinstance(selector, str):
        return lambda name: name.startswith(selector)
    raise TypeError(f"selector must be a name prefix, 'backbone', or a predicate, got {selector!r}")


def freeze(model: ModelGraph, selector) -> FreezeReport:
    """Flag every parameter matched by ``selector`` as frozen.

    ``selector`` is a parameter-name prefix, a predicate over parameter
    names, or the keyword ``"backbone"`` (everything outside the head).
    The fraction reported counts parameter tensors.
    """
    match = _selector_fn(model, selector)
    names = list(model.parameters())
    matched = [n for n in names if match(n)]
    if not matched:
        warnings.warn(f"freeze selector {selector!r} matched no parameters", stacklevel=2)
    model.frozen.update(matched)
    return FreezeReport(matched, len(names))


def unfreeze(model: ModelGraph, selector=None) -> None:
    if selector is None:
        model.frozen.clear()
        return
    match = _selector_fn(model, selector)
    model.frozen.difference_update([n for n in model.frozen if match(n)])
