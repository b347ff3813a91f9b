"""Layer definitions with explicit forward/backward passes.

Activations are channels-last: a conv input of length L with C channels has
per-example shape (L, C). A flat trace of length D enters the first conv as
(D, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels

ACTIVATIONS = ("relu", "linear", "tanh")


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")


def _act_forward(z, name):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_backward(dout, z, a, name):
    if name == "relu":
        return dout * (z > 0)
    if name == "tanh":
        return dout * (1.0 - a * a)
    return dout


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(frozen=True)
class Conv1D:
    filters: int
    kernel: int
    stride: int = 1
    activation: str = "relu"
    padding: str = "same"
    kind = "conv1d"

    def __post_init__(self):
        _check_activation(self.activation)
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if min(self.filters, self.kernel, self.stride) < 1:
            raise ValueError("filters, kernel and stride must be positive")

    def _pads(self, length):
        if self.padding == "valid":
            return 0, 0
        out = -(-length // self.stride)
        total = max((out - 1) * self.stride + self.kernel - length, 0)
        return total // 2, total - total // 2

    def output_shape(self, in_shape):
        length, _ = _as_channels(in_shape)
        lo, hi = self._pads(length)
        out = (length + lo + hi - self.kernel) // self.stride + 1
        if out < 1:
            raise ValueError(f"conv1d kernel {self.kernel} does not fit input length {length}")
        return (out, self.filters)

    def init(self, in_shape, rng):
        _, cin = _as_channels(in_shape)
        w = _glorot(rng, (self.kernel, cin, self.filters), self.kernel * cin, self.kernel * self.filters)
        return {"W": w, "b": np.zeros(self.filters)}

    def forward(self, x, p):
        if x.ndim == 2:
            x = x[:, :, None]
        lo, hi = self._pads(x.shape[1])
        xp = np.pad(x, ((0, 0), (lo, hi), (0, 0))) if lo or hi else x
        z = kernels.conv1d_forward(xp, p["W"], p["b"], self.stride)
        a = _act_forward(z, self.activation)
        return a, (xp, z, a, x.shape, lo)

    def backward(self, dout, cache, p):
        xp, z, a, in_shape, lo = cache
        dz = _act_backward(dout, z, a, self.activation)
        dxp, dw, db = kernels.conv1d_backward(xp, p["W"], dz, self.stride)
        dx = dxp[:, lo : lo + in_shape[1], :]
        if len(in_shape) == 2:
            dx = dx[:, :, 0]
        return dx, {"W": dw, "b": db}

    def describe(self):
        return {"type": self.kind, "filters": self.filters, "kernel": self.kernel,
                "stride": self.stride, "activation": self.activation, "padding": self.padding}


@dataclass(frozen=True)
class Pool:
    mode: str = "avg"
    width: int = 2
    kind = "pool"

    def __post_init__(self):
        if self.mode not in ("avg", "max"):
            raise ValueError(f"unknown pooling mode {self.mode!r}")
        if self.width < 1:
            raise ValueError("pool width must be positive")

    def output_shape(self, in_shape):
        length, c = _as_channels(in_shape)
        out = length // self.width
        if out < 1:
            raise ValueError(f"pool width {self.width} does not fit input length {length}")
        return (out, c)

    def init(self, in_shape, rng):
        return {}

    def forward(self, x, p):
        squeeze = x.ndim == 2
        if squeeze:
            x = x[:, :, None]
        n, length, c = x.shape
        out_len = length // self.width
        win = x[:, : out_len * self.width].reshape(n, out_len, self.width, c)
        if self.mode == "avg":
            out = win.mean(axis=2)
            arg = None
        else:
            arg = win.argmax(axis=2)
            out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]
        return out, (x.shape, squeeze, arg)

    def backward(self, dout, cache, p):
        shape, squeeze, arg = cache
        n, length, c = shape
        out_len = dout.shape[1]
        dx = np.zeros(shape)
        if self.mode == "avg":
            g = np.repeat(dout / self.width, self.width, axis=1)
        else:
            g4 = np.zeros((n, out_len, self.width, c))
            np.put_along_axis(g4, arg[:, :, None, :], dout[:, :, None, :], axis=2)
            g = g4.reshape(n, out_len * self.width, c)
        dx[:, : out_len * self.width] = g
        return (dx[:, :, 0] if squeeze else dx), {}

    def describe(self):
        return {"type": self.kind, "mode": self.mode, "width": self.width}


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def init(self, in_shape, rng):
        return {}

    def forward(self, x, p):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache, p):
        return dout.reshape(cache), {}

    def describe(self):
        return {"type": self.kind}


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"
    kind = "dense"

    def __post_init__(self):
        _check_activation(self.activation)
        if self.units < 1:
            raise ValueError("dense units must be positive")

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"dense layer expects flat input, got shape {in_shape}")
        return (self.units,)

    def init(self, in_shape, rng):
        fan_in = in_shape[0]
        return {"W": _glorot(rng, (fan_in, self.units), fan_in, self.units), "b": np.zeros(self.units)}

    def forward(self, x, p):
        z = x @ p["W"] + p["b"]
        a = _act_forward(z, self.activation)
        return a, (x, z, a)

    def backward(self, dout, cache, p):
        x, z, a = cache
        dz = _act_backward(dout, z, a, self.activation)
        return dz @ p["W"].T, {"W": x.T @ dz, "b": dz.sum(axis=0)}

    def describe(self):
        return {"type": self.kind, "units": self.units, "activation": self.activation}


@dataclass(frozen=True)
class SoftmaxOutput:
    """Affine map to ``classes`` logits followed by a softmax."""

    classes: int
    kind = "softmax"

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"softmax output expects flat input, got shape {in_shape}")
        return (self.classes,)

    def init(self, in_shape, rng):
        fan_in = in_shape[0]
        return {"W": _glorot(rng, (fan_in, self.classes), fan_in, self.classes),
                "b": np.zeros(self.classes)}

    def logits(self, x, p):
        return x @ p["W"] + p["b"]

    def forward(self, x, p):
        probs = softmax(self.logits(x, p))
        return probs, x

    def backward(self, dlogits, cache, p):
        # takes the gradient w.r.t. the logits (softmax and loss are fused upstream)
        x = cache
        return dlogits @ p["W"].T, {"W": x.T @ dlogits, "b": dlogits.sum(axis=0)}

    def describe(self):
        return {"type": self.kind, "classes": self.classes}


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_channels(shape):
    if len(shape) == 1:
        return shape[0], 1
    if len(shape) == 2:
        return shape
    raise ValueError(f"expected (L,) or (L, C) input, got {shape}")


LAYER_TYPES = {
    "conv1d": Conv1D,
    "pool": Pool,
    "flatten": Flatten,
    "dense": Dense,
    "softmax": SoftmaxOutput,
}


def layer_from_dict(d):
    d = dict(d)
    kind = d.pop("type")
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown layer type {kind!r}") from None
    return cls(**d)
