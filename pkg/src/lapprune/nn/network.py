from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .layers import Activation, BatchNorm, Conv2d, Dense, Flatten, Layer, MaxPool2d

PRUNABLE_KINDS = ("dense", "conv2d")
ARCHITECTURES = ("linear-1000", "fcn-paper", "fcn-small", "conv6-small")


class Network:
    """Ordered stack of layers plus optional pruning masks keyed by layer index."""

    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int], masks=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.masks: dict[int, np.ndarray] = {} if masks is None else dict(masks)
        self.output_shape = self._check_shapes()
        for i, m in self.masks.items():
            self._check_mask(i, m)

    def _check_shapes(self):
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer!r}): {exc}") from None
        return shape

    def _check_mask(self, i, m):
        if i not in self.prunable:
            raise ValueError(f"layer {i} is not prunable")
        if m.shape != self.layers[i].weight.shape:
            raise ValueError(f"mask shape {m.shape} does not match weight {self.layers[i].weight.shape}")

    @property
    def prunable(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind in PRUNABLE_KINDS]

    @property
    def n_classes(self) -> int:
        return self.output_shape[0]

    def weight(self, i: int) -> np.ndarray:
        return self.layers[i].weight

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers], self.input_shape,
                       {i: m.copy() for i, m in self.masks.items()})

    def attach_masks(self, masks: dict) -> "Network":
        """Attach masks (in place) and zero the masked weights."""
        for i, m in masks.items():
            m = np.asarray(m, dtype=np.float64)
            self._check_mask(i, m)
            self.masks[i] = m
            self.layers[i].params["W"] *= m
        return self

    def n_weights(self, i=None) -> int:
        idx = self.prunable if i is None else [i]
        return int(sum(self.layers[j].weight.size for j in idx))

    def surviving_fraction(self) -> float:
        alive = sum(int(self.masks[i].sum()) if i in self.masks else self.layers[i].weight.size
                    for i in self.prunable)
        return alive / self.n_weights()

    def forward(self, x, training=False, update_stats=False, keep_caches=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input batch shape {x.shape[1:]} != network input {self.input_shape}")
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, training=training, update_stats=update_stats)
            if keep_caches:
                caches.append(cache)
        return (x, caches) if keep_caches else x

    def backward(self, dout, caches, upto: int = 0):
        """Backpropagate ``dout``; returns (dx, {(layer, name): grad})."""
        grads = {}
        with_params = [i for i, l in enumerate(self.layers) if l.params]
        stop = max(upto, with_params[0]) if with_params and upto == 0 else upto
        for i in range(len(self.layers) - 1, stop - 1, -1):
            dout, g = self.layers[i].backward(dout, caches[i], need_dx=(i > stop or upto > 0))
            for name, val in g.items():
                grads[(i, name)] = val
        return dout, grads

    def parameters(self) -> dict:
        return {(i, name): arr for i, l in enumerate(self.layers) for name, arr in l.params.items()}

    def __repr__(self):
        body = ", ".join(repr(l) for l in self.layers)
        return f"Network(input={self.input_shape}, [{body}])"


def forward(net: Network, x, training: bool = False) -> np.ndarray:
    """Logits for a batch ``x`` (or a single example without batch axis)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == net.input_shape
    out = net.forward(x[None] if single else x, training=training)
    return out[0] if single else out


# ---------------------------------------------------------------- building


@dataclass
class NetSpec:
    """Layer recipe: entries like ``("dense", 100)``, ``("conv", 16)``,
    ``("conv", 16, 3, "circular")``, ``("bn",)``, ``("relu",)``, ``("pool",)``,
    ``("flatten",)``."""

    input_shape: tuple
    layers: list = field(default_factory=list)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_init(spec: NetSpec, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    layers = []
    shape = tuple(spec.input_shape)
    for entry in spec.layers:
        kind, *args = entry if isinstance(entry, (tuple, list)) else (entry,)
        if kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"dense layer needs a flat input, got {shape}; add a flatten step")
            out = int(args[0])
            a = glorot_bound(shape[0], out)
            layer = Dense(rng.uniform(-a, a, size=(out, shape[0])))
        elif kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"conv layer needs a (C, H, W) input, got {shape}")
            out = int(args[0])
            k = int(args[1]) if len(args) > 1 else 3
            padding = args[2] if len(args) > 2 else "same-zero"
            a = glorot_bound(shape[0] * k * k, out * k * k)
            layer = Conv2d(rng.uniform(-a, a, size=(out, shape[0], k, k)), padding=padding)
        elif kind == "bn":
            layer = BatchNorm(np.ones(shape[0]))
        elif kind in ("relu", "sigmoid", "tanh", "identity"):
            layer = Activation(kind)
        elif kind == "pool":
            layer = MaxPool2d()
        elif kind == "flatten":
            layer = Flatten()
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        shape = layer.output_shape(shape)
        layers.append(layer)
    return Network(layers, spec.input_shape)


def architecture(tag: str, input_shape=(1, 28, 28), n_classes: int = 10,
                 activation: str = "relu", batchnorm: bool = False) -> NetSpec:
    """Layer recipes for the named desk-scale architectures."""
    act = [(activation,)] if activation != "identity" else []

    def dense_block(width):
        return [("dense", width)] + ([("bn",)] if batchnorm else []) + act

    def conv_block(ch):
        return [("conv", ch)] + ([("bn",)] if batchnorm else []) + act

    if tag == "linear-1000":
        layers = [("flatten",), ("dense", 1000), ("dense", n_classes)]
    elif tag == "fcn-small":
        layers = [("flatten",)] + dense_block(100) * 2 + [("dense", n_classes)]
    elif tag == "fcn-paper":
        layers = [("flatten",)] + dense_block(500) * 4 + [("dense", n_classes)]
    elif tag == "conv6-small":
        layers = (conv_block(16) + conv_block(16) + [("pool",)]
                  + conv_block(32) + conv_block(32) + [("pool",)]
                  + conv_block(64) + conv_block(64) + [("flatten",)]
                  + dense_block(64) * 2 + [("dense", n_classes)])
    else:
        raise ValueError(f"unknown architecture {tag!r}; choose from {ARCHITECTURES}")
    return NetSpec(tuple(input_shape), layers)


# ---------------------------------------------------------------- loss


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grads(net: Network, X, y, training: bool = True, update_stats: bool = False,
                   loss_scale: float = 1.0):
    """Mean softmax cross-entropy and its gradient for every parameter."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("loss_and_grads needs a nonempty batch")
    logits, caches = net.forward(X, training=training, update_stats=update_stats, keep_caches=True)
    loss = cross_entropy(logits, y)
    dlogits = softmax(logits)
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits *= loss_scale / len(y)
    _, grads = net.backward(dlogits, caches)
    return loss_scale * loss, grads
