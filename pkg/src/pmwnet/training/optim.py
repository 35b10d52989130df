"""First-order optimizers updating parameter arrays in place."""

from __future__ import annotations

from typing import Mapping

import numpy as np

OPTIMIZERS = ("adam", "sgd-momentum")


class Optimizer:
    kind = ""
    slots: tuple[str, ...] = ()

    def __init__(self):
        self.t = 0
        self.state: dict[str, dict[str, np.ndarray]] = {s: {} for s in self.slots}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """Apply one update to every parameter that has a gradient."""
        self.t += 1
        for name, g in grads.items():
            p = params[name]
            self._update(name, p, g.astype(p.dtype, copy=False))

    def _slot(self, slot: str, name: str, like: np.ndarray) -> np.ndarray:
        buf = self.state[slot].get(name)
        if buf is None:
            buf = self.state[slot][name] = np.zeros_like(like)
        return buf

    def hyper(self) -> dict:
        raise NotImplementedError

    def tensors(self) -> dict[str, np.ndarray]:
        """Slot buffers flattened to ``slot/param`` names."""
        return {f"{s}/{n}": v for s in self.slots for n, v in self.state[s].items()}

    def load_tensors(self, tensors: Mapping[str, np.ndarray]) -> None:
        self.state = {s: {} for s in self.slots}
        for key, v in tensors.items():
            slot, _, name = key.partition("/")
            self.state[slot][name] = np.array(v)


class SGDMomentum(Optimizer):
    """``v <- mu*v - lr*g``; ``p <- p + v``."""

    kind = "sgd-momentum"
    slots = ("velocity",)

    def __init__(self, lr: float = 1e-2, momentum: float = 0.9):
        super().__init__()
        self.lr, self.momentum = lr, momentum

    def _update(self, name, p, g):
        v = self._slot("velocity", name, p)
        v *= self.momentum
        v -= self.lr * g
        p += v

    def hyper(self):
        return {"lr": self.lr, "momentum": self.momentum}


class Adam(Optimizer):
    """Adaptive moments with the bias correction folded into the step size:
    ``p <- p - lr*sqrt(1-b2^t)/(1-b1^t) * m / (sqrt(v) + eps)``.
    """

    kind = "adam"
    slots = ("m", "v")

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        super().__init__()
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def _update(self, name, p, g):
        m = self._slot("m", name, p)
        v = self._slot("v", name, p)
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        lr_t = self.lr * np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        p -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.dtype, copy=False)

    def hyper(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def make_optimizer(kind: str, **hyper) -> Optimizer:
    if kind == "adam":
        return Adam(**hyper)
    if kind == "sgd-momentum":
        return SGDMomentum(**hyper)
    raise ValueError(f"unknown optimizer {kind!r}; choose from {', '.join(OPTIMIZERS)}")
