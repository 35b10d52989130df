"""Central finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .rng import make_rng


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def fd_check(
    forward: Callable[..., np.ndarray],
    inputs: Sequence[np.ndarray],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    eps: float = 1e-5,
    seed: int = 0,
) -> float:
    """Compare ``backward`` against central differences of ``forward``.

    The op output is reduced to a scalar through a fixed random projection
    (drawn from ``seed``), so every output element contributes.  ``backward``
    receives d scalar / d output and must return one gradient per input, or
    None for inputs that are not differentiated.  Returns the maximum
    relative error over all checked inputs.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out = np.asarray(forward(*inputs), dtype=np.float64)
    proj = make_rng(seed, "fd_check").standard_normal(out.shape)

    def scalar() -> float:
        return float(np.sum(np.asarray(forward(*inputs), dtype=np.float64) * proj))

    analytic = backward(proj.copy() if out.shape else np.float64(proj))
    worst = 0.0
    for x, g in zip(inputs, analytic):
        if g is None:
            continue
        num = numeric_grad(scalar, x, eps)
        worst = max(worst, relative_error(np.asarray(g).reshape(x.shape), num))
    return worst
