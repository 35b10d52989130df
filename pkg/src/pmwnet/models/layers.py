"""Layer objects wrapping :mod:`pmwnet.tensor.ops`.

A layer owns its parameters (trainable) and buffers (non-trainable state
such as batchnorm running statistics), knows its output shape, and exposes
``forward(inputs, mode, rng) -> (out, cache)`` and
``backward(dout, cache) -> (dinputs, dparams)``.  Shapes exclude the batch
axis.
"""

from __future__ import annotations

import math

import numpy as np

from ..tensor import ConvSpec, ShapeError
from ..tensor import ops


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    kind = "layer"
    weighted = False

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.role = ""

    def build(self, in_shapes, rng, dtype) -> tuple:
        """Create parameters for the given input shapes and return the output shape."""
        return in_shapes[0]

    def forward(self, inputs, mode, rng):
        raise NotImplementedError

    def backward(self, dout, cache):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2D(Layer):
    kind = "conv"
    weighted = True

    def __init__(self, out_channels, kernel=3, stride=1, padding=0, bias=True):
        super().__init__()
        self.spec = ConvSpec(out_channels, kernel, stride, padding)
        self.use_bias = bias

    def build(self, in_shapes, rng, dtype):
        (c, h, w), = in_shapes
        kh, kw = self.spec.kernel
        f = self.spec.out_channels
        ho, wo = self.spec.output_hw(h, w)
        self.params["weight"] = kaiming_uniform(rng, (f, c, kh, kw), c * kh * kw, dtype)
        if self.use_bias:
            self.params["bias"] = np.zeros(f, dtype=dtype)
        return (f, ho, wo)

    def forward(self, inputs, mode, rng):
        return ops.conv2d(inputs[0], self.params["weight"], self.params.get("bias"), self.spec)

    def backward(self, dout, cache):
        dx, dw, db = ops.conv2d_backward(dout, cache)
        grads = {"weight": dw}
        if self.use_bias:
            grads["bias"] = db
        return [dx], grads

    def __repr__(self):
        s = self.spec
        return f"Conv2D({s.out_channels}, kernel={s.kernel}, stride={s.stride}, padding={s.padding})"


class Dense(Layer):
    kind = "dense"
    weighted = True

    def __init__(self, units, init="kaiming"):
        super().__init__()
        if init not in ("kaiming", "xavier"):
            raise ValueError(f"unknown init {init!r}")
        self.units = units
        self.init = init

    def build(self, in_shapes, rng, dtype):
        (d,), = in_shapes
        shape = (d, self.units)
        if self.init == "kaiming":
            self.params["weight"] = kaiming_uniform(rng, shape, d, dtype)
        else:
            self.params["weight"] = xavier_uniform(rng, shape, d, self.units, dtype)
        self.params["bias"] = np.zeros(self.units, dtype=dtype)
        return (self.units,)

    def forward(self, inputs, mode, rng):
        return ops.dense(inputs[0], self.params["weight"], self.params["bias"])

    def backward(self, dout, cache):
        dx, dw, db = ops.dense_backward(dout, cache)
        return [dx], {"weight": dw, "bias": db}

    def __repr__(self):
        return f"Dense({self.units}, init={self.init!r})"


class BatchNorm(Layer):
    kind = "batchnorm"

    def build(self, in_shapes, rng, dtype):
        shape = in_shapes[0]
        c = shape[0]
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)
        return shape

    def forward(self, inputs, mode, rng):
        out, stats, cache = ops.batchnorm(
            inputs[0],
            self.params["gamma"],
            self.params["beta"],
            self.buffers["running_mean"],
            self.buffers["running_var"],
            mode,
        )
        return out, (cache, stats)

    def backward(self, dout, cache):
        dx, dg, db = ops.batchnorm_backward(dout, cache[0])
        return [dx], {"gamma": dg, "beta": db}

    def update_state(self, cache):
        self.buffers["running_mean"], self.buffers["running_var"] = cache[1]


class ReLU(Layer):
    kind = "relu"

    def forward(self, inputs, mode, rng):
        return ops.relu(inputs[0])

    def backward(self, dout, cache):
        return [ops.relu_backward(dout, cache)], {}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, inputs, mode, rng):
        return ops.sigmoid(inputs[0])

    def backward(self, dout, cache):
        return [ops.sigmoid_backward(dout, cache)], {}


class _Pool(Layer):
    def __init__(self, window=2, stride=None, padding=0):
        super().__init__()
        self.window = window
        self.stride = window if stride is None else stride
        self.padding = padding

    def build(self, in_shapes, rng, dtype):
        c, h, w = in_shapes[0]
        kh, kw = ops._pair(self.window)
        sh, sw = ops._pair(self.stride)
        ph, pw = ops._pair(self.padding)
        ho, wo = ops.out_size(h, kh, sh, ph), ops.out_size(w, kw, sw, pw)
        if ho < 1 or wo < 1:
            raise ShapeError(f"{type(self).__name__} window {kh}x{kw} larger than input {h}x{w}")
        return (c, ho, wo)

    def __repr__(self):
        return f"{type(self).__name__}({self.window}, stride={self.stride}, padding={self.padding})"


class MaxPool(_Pool):
    kind = "maxpool"

    def forward(self, inputs, mode, rng):
        return ops.maxpool2d(inputs[0], self.window, self.stride, self.padding)

    def backward(self, dout, cache):
        return [ops.maxpool2d_backward(dout, cache)], {}


class AvgPool(_Pool):
    kind = "avgpool"

    def forward(self, inputs, mode, rng):
        return ops.avgpool2d(inputs[0], self.window, self.stride, self.padding)

    def backward(self, dout, cache):
        return [ops.avgpool2d_backward(dout, cache)], {}


class GlobalAvgPool(Layer):
    kind = "global_avgpool"

    def build(self, in_shapes, rng, dtype):
        return (in_shapes[0][0],)

    def forward(self, inputs, mode, rng):
        return ops.global_avg_pool(inputs[0])

    def backward(self, dout, cache):
        return [ops.global_avg_pool_backward(dout, cache)], {}


class Flatten(Layer):
    kind = "flatten"

    def build(self, in_shapes, rng, dtype):
        return (int(np.prod(in_shapes[0])),)

    def forward(self, inputs, mode, rng):
        x = inputs[0]
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache):
        return [dout.reshape(cache)], {}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.3):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, inputs, mode, rng):
        return ops.dropout(inputs[0], self.rate, rng, mode)

    def backward(self, dout, cache):
        return [ops.dropout_backward(dout, cache)], {}

    def __repr__(self):
        return f"Dropout({self.rate})"


class Add(Layer):
    kind = "add"

    def build(self, in_shapes, rng, dtype):
        first = in_shapes[0]
        for s in in_shapes[1:]:
            if s != first:
                raise ShapeError(f"Add operands differ in shape: {first} vs {s}")
        return first

    def forward(self, inputs, mode, rng):
        out = inputs[0]
        for x in inputs[1:]:
            out = out + x
        return out, len(inputs)

    def backward(self, dout, cache):
        return [dout] * cache, {}


class Concat(Layer):
    """Concatenate along the channel axis."""

    kind = "concat"

    def build(self, in_shapes, rng, dtype):
        spatial = in_shapes[0][1:]
        for s in in_shapes[1:]:
            if s[1:] != spatial:
                raise ShapeError(f"Concat operands differ spatially: {in_shapes}")
        return (sum(s[0] for s in in_shapes), *spatial)

    def forward(self, inputs, mode, rng):
        return np.concatenate(inputs, axis=1), [x.shape[1] for x in inputs]

    def backward(self, dout, cache):
        cuts = np.cumsum(cache)[:-1]
        return [np.ascontiguousarray(g) for g in np.split(dout, cuts, axis=1)], {}
