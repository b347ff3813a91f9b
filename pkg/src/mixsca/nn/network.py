"""Network specs, parameters, forward/backward passes and the CCE loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv1D, Dense, Flatten, Pool, SoftmaxOutput, layer_from_dict

PROB_FLOOR = 1e-30


class NonFiniteError(FloatingPointError):
    """An activation, loss or gradient became NaN or infinite."""


@dataclass(frozen=True)
class NetworkSpec:
    input_length: int
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()

    @property
    def n_classes(self) -> int:
        return self.layers[-1].classes

    def shapes(self) -> list[tuple]:
        """Per-example shapes from the input through every layer; raises if they do not chain."""
        if self.input_length < 1:
            raise ValueError("input length must be positive")
        if not self.layers or not isinstance(self.layers[-1], SoftmaxOutput):
            raise ValueError("the last layer must be a softmax output")
        if any(isinstance(l, SoftmaxOutput) for l in self.layers[:-1]):
            raise ValueError("softmax output is only allowed as the last layer")
        shapes = [(self.input_length,)]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    def init_params(self, rng: np.random.Generator) -> list[dict]:
        shapes = self.shapes()
        return [layer.init(shape, rng) for layer, shape in zip(self.layers, shapes)]

    def to_dict(self) -> dict:
        return {"input_length": self.input_length, "layers": [l.describe() for l in self.layers]}

    @classmethod
    def from_dict(cls, d) -> "NetworkSpec":
        return cls(int(d["input_length"]), tuple(layer_from_dict(l) for l in d["layers"]))


def _check_input(spec: NetworkSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_length:
        raise ValueError(f"expected a batch of shape (n, {spec.input_length}), got {x.shape}")
    return x


def _finite(a, where):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {where}")
    return a


def _run(spec, params, x):
    caches = []
    for i, (layer, p) in enumerate(zip(spec.layers, params)):
        x, cache = layer.forward(x, p)
        _finite(x, f"output of layer {i} ({layer.kind})")
        caches.append(cache)
    return x, caches


def forward(spec: NetworkSpec, params, x) -> np.ndarray:
    """Class probabilities, one row per trace."""
    probs, _ = _run(spec, params, _check_input(spec, x))
    return probs


def logits(spec: NetworkSpec, params, x) -> np.ndarray:
    x = _check_input(spec, x)
    for layer, p in zip(spec.layers[:-1], params[:-1]):
        x, _ = layer.forward(x, p)
    return spec.layers[-1].logits(x, params[-1])


def _check_targets(probs, targets):
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != probs.shape:
        raise ValueError(f"targets shape {targets.shape} does not match predictions {probs.shape}")
    if np.any(targets < -1e-9) or np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("targets are not probability vectors")
    return targets


def cce_loss(probs, targets) -> float:
    """Mean categorical cross-entropy in nats; accepts soft targets."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = _check_targets(probs, targets)
    logp = np.log(np.clip(probs, PROB_FLOOR, 1.0))
    return float(-(targets * logp).sum(axis=1).mean())


def backward(spec: NetworkSpec, params, x, targets):
    """Loss and exact gradients of mean CCE w.r.t. every parameter."""
    x = _check_input(spec, x)
    probs, caches = _run(spec, params, x)
    targets = _check_targets(probs, targets)
    loss = cce_loss(probs, targets)
    # softmax + CCE: d(loss)/d(logits) = (p - y) / batch when targets sum to one
    dout = (probs - targets) / x.shape[0]
    grads = [None] * len(spec.layers)
    for i in range(len(spec.layers) - 1, -1, -1):
        dout, grads[i] = spec.layers[i].backward(dout, caches[i], params[i])
    for i, g in enumerate(grads):
        for name, v in g.items():
            _finite(v, f"gradient {name} of layer {i}")
    return loss, grads


def copy_params(params):
    return [{k: v.copy() for k, v in p.items()} for p in params]


class Model:
    """A network spec bundled with a frozen parameter snapshot."""

    def __init__(self, spec: NetworkSpec, params, meta=None):
        self.spec = spec
        self.params = params
        self.meta = dict(meta or {})

    def predict(self, x, batch_size=1000) -> np.ndarray:
        x = _check_input(self.spec, x)
        if x.shape[0] == 0:
            return np.zeros((0, self.spec.n_classes))
        out = [forward(self.spec, self.params, x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out)


def build_reference_cnn(input_length: int, n_classes: int, max_filters: int = 512) -> NetworkSpec:
    """VGG-style CNN: five conv/avg-pool blocks, two 4096-unit dense layers, softmax."""
    layers = []
    for i in range(5):
        layers.append(Conv1D(min(64 * 2 ** min(i, 3), max_filters), 11, 1, "relu"))
        layers.append(Pool("avg", 2))
    layers += [Flatten(), Dense(4096, "relu"), Dense(4096, "relu"), SoftmaxOutput(n_classes)]
    return NetworkSpec(input_length, tuple(layers))


def build_desk_mlp(input_length: int, n_classes: int) -> NetworkSpec:
    return NetworkSpec(input_length, (Dense(64, "relu"), Dense(64, "relu"), SoftmaxOutput(n_classes)))


def build_desk_cnn(input_length: int, n_classes: int) -> NetworkSpec:
    """Small conv net for desynchronized desk-scale sets."""
    return NetworkSpec(
        input_length,
        (Conv1D(8, 5), Pool("avg", 2), Conv1D(16, 5), Pool("avg", 2), Flatten(),
         Dense(32, "relu"), SoftmaxOutput(n_classes)),
    )


ARCHITECTURES = {
    "desk_mlp": build_desk_mlp,
    "desk_cnn": build_desk_cnn,
    "reference_cnn": build_reference_cnn,
}


def build_network(name: str, input_length: int, n_classes: int) -> NetworkSpec:
    try:
        builder = ARCHITECTURES[name]
    except KeyError:
        raise ValueError(f"unknown network {name!r}; choose from {sorted(ARCHITECTURES)}") from None
    return builder(input_length, n_classes)
