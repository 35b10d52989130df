"""Layer math on dense NCHW arrays.

Every differentiable op comes as a ``foo(...)`` forward returning
``(out, cache)`` and a ``foo_backward(dout, cache)`` returning the input and
parameter gradients.  Forwards are pure: stateful quantities (batchnorm
running statistics) are returned, never mutated in place.

A "tensor" here is a C-contiguous :class:`numpy.ndarray` of float32 or
float64; :func:`as_tensor` enforces that contract at the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import as_strided

DTYPES = (np.float32, np.float64)

PROB_EPS = 1e-7
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x, dtype=None) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype not in DTYPES:
        arr = arr.astype(np.float64 if dtype is None else dtype)
    return np.ascontiguousarray(arr)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """Output length along one axis: ``floor((size + 2*pad - kernel) / stride) + 1``."""
    span = size + 2 * pad - kernel
    if span < 0:
        return 0
    return span // stride + 1


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _pair(self.padding))
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ValueError(f"illegal conv spec {self}")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        ho = out_size(h, self.kernel[0], self.stride[0], self.padding[0])
        wo = out_size(w, self.kernel[1], self.stride[1], self.padding[1])
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"conv output would be empty: input {h}x{w}, kernel {self.kernel}, "
                f"stride {self.stride}, padding {self.padding}"
            )
        return ho, wo


def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    """Strided read-only view of shape (N, C, Ho, Wo, kh, kw) over padded input."""
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    return as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s0, s1, s2 * sh, s3 * sw, s2, s3),
        writeable=False,
    )


def _pad(x: np.ndarray, ph: int, pw: int, value: float = 0.0) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=value)


def _scatter_windows(dcols: np.ndarray, x_shape, kh, kw, sh, sw, ph, pw) -> np.ndarray:
    """Adjoint of :func:`_windows` + padding: sum window gradients back onto the input."""
    n, c, h, w = x_shape
    ho, wo = dcols.shape[2], dcols.shape[3]
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += dcols[:, :, :, :, i, j]
    return dxp[:, :, ph : ph + h, pw : pw + w]


# ---------------------------------------------------------------- convolution


class ConvCache(NamedTuple):
    x_shape: tuple
    cols: np.ndarray
    weights: np.ndarray
    spec: ConvSpec


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None, spec: ConvSpec):
    """Cross-correlation of ``x`` [N,C,H,W] with ``weights`` [F,C,kh,kw] plus per-filter bias."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be 4-D NCHW, got shape {x.shape}")
    if weights.ndim != 4:
        raise ShapeError(f"conv2d weights must be 4-D [F,C,kh,kw], got shape {weights.shape}")
    n, c, h, w = x.shape
    f, wc, kh, kw = weights.shape
    if wc != c:
        raise ShapeError(f"conv2d channel mismatch: input has C={c}, weights expect C={wc}")
    if f != spec.out_channels:
        raise ShapeError(f"conv2d filter count mismatch: weights F={f}, spec out_channels={spec.out_channels}")
    if (kh, kw) != spec.kernel:
        raise ShapeError(f"conv2d kernel mismatch: weights {kh}x{kw}, spec {spec.kernel}")
    if bias is not None and bias.shape != (f,):
        raise ShapeError(f"conv2d bias must have shape ({f},), got {bias.shape}")
    ho, wo = spec.output_hw(h, w)
    sh, sw = spec.stride
    ph, pw = spec.padding
    xp = _pad(x, ph, pw)
    if (kh, kw) == (1, 1):
        cols = np.ascontiguousarray(xp[:, :, : sh * ho : sh, : sw * wo : sw].transpose(0, 2, 3, 1))
        cols = cols.reshape(n, ho, wo, c, 1, 1)
    else:
        cols = np.ascontiguousarray(_windows(xp, kh, kw, sh, sw, ho, wo).transpose(0, 2, 3, 1, 4, 5))
    flat = cols.reshape(n * ho * wo, c * kh * kw)
    out = flat @ weights.reshape(f, -1).T
    if bias is not None:
        out += bias
    out = np.ascontiguousarray(out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))
    return out, ConvCache(x.shape, cols, weights, spec)


def conv2d_backward(dout: np.ndarray, cache: ConvCache):
    """Return ``(dx, dweights, dbias)``."""
    n, c, h, w = cache.x_shape
    f, _, kh, kw = cache.weights.shape
    ho, wo = dout.shape[2], dout.shape[3]
    sh, sw = cache.spec.stride
    ph, pw = cache.spec.padding
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    flat = cache.cols.reshape(n * ho * wo, c * kh * kw)
    dw = (d2.T @ flat).reshape(cache.weights.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ cache.weights.reshape(f, -1)).reshape(n, ho, wo, c, kh, kw)
    dcols = dcols.transpose(0, 3, 1, 2, 4, 5)
    dx = _scatter_windows(dcols, cache.x_shape, kh, kw, sh, sw, ph, pw)
    return np.ascontiguousarray(dx), dw, db


# -------------------------------------------------------------------- pooling


def _pool_geometry(x, window, stride, padding):
    if x.ndim != 4:
        raise ShapeError(f"pooling input must be 4-D NCHW, got shape {x.shape}")
    kh, kw = _pair(window)
    sh, sw = _pair(stride if stride is not None else window)
    ph, pw = _pair(padding)
    _, _, h, w = x.shape
    ho, wo = out_size(h, kh, sh, ph), out_size(w, kw, sw, pw)
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
    return kh, kw, sh, sw, ph, pw, ho, wo


class PoolCache(NamedTuple):
    x_shape: tuple
    geometry: tuple
    argmax: np.ndarray | None


def maxpool2d(x: np.ndarray, window=2, stride=None, padding=0):
    kh, kw, sh, sw, ph, pw, ho, wo = geom = _pool_geometry(x, window, stride, padding)
    xp = _pad(x, ph, pw, value=-np.inf)
    win = _windows(xp, kh, kw, sh, sw, ho, wo).reshape(*x.shape[:2], ho, wo, kh * kw)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), PoolCache(x.shape, geom, idx)


def maxpool2d_backward(dout: np.ndarray, cache: PoolCache) -> np.ndarray:
    kh, kw, sh, sw, ph, pw, ho, wo = cache.geometry
    n, c, h, w = cache.x_shape
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            hit = cache.argmax == i * kw + j
            dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += np.where(hit, dout, 0)
    return np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + w])


def avgpool2d(x: np.ndarray, window=2, stride=None, padding=0):
    """Windowed mean; zero padding counts toward the divisor."""
    kh, kw, sh, sw, ph, pw, ho, wo = geom = _pool_geometry(x, window, stride, padding)
    xp = _pad(x, ph, pw)
    out = _windows(xp, kh, kw, sh, sw, ho, wo).mean(axis=(-2, -1))
    return np.ascontiguousarray(out), PoolCache(x.shape, geom, None)


def avgpool2d_backward(dout: np.ndarray, cache: PoolCache) -> np.ndarray:
    kh, kw, sh, sw, ph, pw, ho, wo = cache.geometry
    share = dout / (kh * kw)
    dcols = np.broadcast_to(share[..., None, None], (*share.shape, kh, kw))
    return np.ascontiguousarray(_scatter_windows(dcols, cache.x_shape, kh, kw, sh, sw, ph, pw))


def global_avg_pool(x: np.ndarray):
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool input must be 4-D NCHW, got shape {x.shape}")
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dout: np.ndarray, x_shape) -> np.ndarray:
    n, c, h, w = x_shape
    return np.ascontiguousarray(np.broadcast_to((dout / (h * w))[:, :, None, None], x_shape))


# ---------------------------------------------------------------------- dense


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None):
    if x.ndim != 2:
        raise ShapeError(f"dense input must be 2-D [N,D], got shape {x.shape}")
    if weights.ndim != 2 or weights.shape[0] != x.shape[1]:
        raise ShapeError(f"dense inner dimension mismatch: input D={x.shape[1]}, weights {weights.shape}")
    out = x @ weights
    if bias is not None:
        if bias.shape != (weights.shape[1],):
            raise ShapeError(f"dense bias must have shape ({weights.shape[1]},), got {bias.shape}")
        out = out + bias
    return out, (x, weights)


def dense_backward(dout: np.ndarray, cache):
    x, weights = cache
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


# ---------------------------------------------------------------- activations


def relu(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def sigmoid(x: np.ndarray):
    """Logistic function evaluated without overflow for large |x|."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, out


def sigmoid_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    return dout * out * (1.0 - out)


# ------------------------------------------------------------------ batchnorm


class BNCache(NamedTuple):
    xhat: np.ndarray | None
    inv_std: np.ndarray
    gamma: np.ndarray
    axes: tuple
    train: bool


def _bn_axes(x: np.ndarray, c: int):
    if x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, c, 1, 1)
    elif x.ndim == 2:
        axes, bshape = (0,), (1, c)
    else:
        raise ShapeError(f"batchnorm expects 2-D or 4-D input, got shape {x.shape}")
    if x.shape[1] != c:
        raise ShapeError(f"batchnorm channel mismatch: input C={x.shape[1]}, parameters C={c}")
    return axes, bshape


def batchnorm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
):
    """Per-channel normalisation.

    Returns ``(out, (new_running_mean, new_running_var), cache)``.  In train
    mode the batch statistics normalise the input and the running statistics
    move toward them by ``1 - momentum``; in infer mode the running statistics
    are used and returned unchanged.
    """
    c = gamma.shape[0]
    axes, bshape = _bn_axes(x, c)
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        m = x.size // c
        unbiased = var * (m / (m - 1)) if m > 1 else var
        new_mean = momentum * running_mean + (1 - momentum) * mean
        new_var = momentum * running_var + (1 - momentum) * unbiased
        train = True
    elif mode == "infer":
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
        train = False
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    return (
        out.astype(x.dtype, copy=False),
        (new_mean.astype(running_mean.dtype), new_var.astype(running_var.dtype)),
        BNCache(xhat, inv_std, gamma, axes, train),
    )


def batchnorm_backward(dout: np.ndarray, cache: BNCache):
    """Return ``(dx, dgamma, dbeta)``."""
    c = cache.gamma.shape[0]
    axes, bshape = _bn_axes(dout, c)
    xhat = cache.xhat
    dbeta = dout.sum(axis=axes)
    dgamma = (dout * xhat).sum(axis=axes)
    g = (cache.gamma * cache.inv_std).reshape(bshape)
    if not cache.train:
        return dout * g, dgamma, dbeta
    m = dout.size // c
    dx = g / m * (m * dout - dbeta.reshape(bshape) - xhat * dgamma.reshape(bshape))
    return dx, dgamma, dbeta


# -------------------------------------------------------------------- dropout


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None, mode: str = "train"):
    """Inverted dropout.  Returns ``(out, mask)``; ``mask`` is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dout if mask is None else dout * mask


# ----------------------------------------------------------------------- loss


def bce_loss(prob: np.ndarray, label: np.ndarray, eps: float = PROB_EPS):
    """Mean binary cross-entropy with probabilities clamped to ``[eps, 1 - eps]``."""
    p = prob.reshape(-1)
    y = np.asarray(label, dtype=p.dtype).reshape(-1)
    if p.shape != y.shape:
        raise ShapeError(f"bce_loss: {p.size} probabilities vs {y.size} labels")
    pc = np.clip(p, eps, 1.0 - eps)
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    return float(loss), (pc, y, (p >= eps) & (p <= 1.0 - eps), prob.shape)


def bce_loss_backward(cache, dloss: float = 1.0) -> np.ndarray:
    """Gradient of the mean loss w.r.t. the (unclamped) probabilities."""
    pc, y, inside, shape = cache
    grad = (pc - y) / (pc * (1.0 - pc)) / pc.size
    grad = np.where(inside, grad, 0.0) * dloss
    return grad.astype(pc.dtype, copy=False).reshape(shape)
