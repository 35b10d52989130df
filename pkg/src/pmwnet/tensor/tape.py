"""Reverse-mode gradient recording for graph execution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# backward_fn(dout) -> (grads for each input value, {param name: grad})
BackwardFn = Callable[[np.ndarray], tuple[Sequence[np.ndarray | None], dict[str, np.ndarray]]]


@dataclass
class _Record:
    inputs: tuple[str, ...]
    output: str
    backward_fn: BackwardFn


@dataclass
class GradTape:
    """Ops recorded in execution order, with their saved activations captured
    inside each ``backward_fn`` closure.

    ``frozen`` names parameters whose gradients are discarded.
    """

    frozen: frozenset[str] = frozenset()
    records: list[_Record] = field(default_factory=list)

    def record(self, inputs: Sequence[str], output: str, backward_fn: BackwardFn) -> None:
        self.records.append(_Record(tuple(inputs), output, backward_fn))


def backward(tape: GradTape, output: str, grad: np.ndarray) -> dict[str, np.ndarray]:
    """Propagate ``grad`` (d loss / d ``output``) back through ``tape``.

    Returns gradients for every unfrozen parameter that the recorded ops
    touched.  Parameters reached by several ops get their gradients summed.
    """
    value_grads: dict[str, np.ndarray] = {output: grad}
    param_grads: dict[str, np.ndarray] = {}
    for rec in reversed(tape.records):
        dout = value_grads.pop(rec.output, None)
        if dout is None:
            continue
        dinputs, dparams = rec.backward_fn(dout)
        for name, g in zip(rec.inputs, dinputs):
            if g is None:
                continue
            if name in value_grads:
                value_grads[name] = value_grads[name] + g
            else:
                value_grads[name] = g
        for name, g in dparams.items():
            if name in tape.frozen:
                continue
            if name in param_grads:
                param_grads[name] = param_grads[name] + g
            else:
                param_grads[name] = g
    return param_grads
