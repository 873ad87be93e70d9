from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network, loss_and_grads


@dataclass
class TrainConfig:
    steps: int = 5000
    learning_rate: float = 1.2e-3
    batch_size: int = 60
    seed: int = 0
    retrain_steps: int = 5000
    train_bn: bool = True

    def __post_init__(self):
        if self.steps < 0 or self.retrain_steps < 0:
            raise ValueError("step counts must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict, lr: float) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        p = params[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m, v = state.m[key], state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def batches(n: int, batch_size: int, steps: int, seed: int):
    """Yield ``steps`` index batches from seeded per-epoch permutations."""
    rng = np.random.default_rng(seed)
    perm, pos = rng.permutation(n), 0
    for _ in range(steps):
        if pos + batch_size > n:
            perm, pos = rng.permutation(n), 0
        yield perm[pos:pos + batch_size]
        pos += batch_size


def train(net: Network, data, cfg: TrainConfig, steps: int | None = None) -> Network:
    """Return a trained copy of ``net``; attached masks stay enforced throughout."""
    net = net.copy()
    steps = cfg.steps if steps is None else steps
    if steps == 0:
        return net
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    params = net.parameters()
    trainable = {k for k in params if cfg.train_bn or net.layers[k[0]].kind != "batchnorm"}
    state = AdamState()
    bs = min(cfg.batch_size, len(data))
    for idx in batches(len(data), bs, steps, cfg.seed):
        _, grads = loss_and_grads(net, data.inputs[idx], data.labels[idx], training=True,
                                  update_stats=True)
        grads = {k: g for k, g in grads.items() if k in trainable}
        for i, m in net.masks.items():
            grads[(i, "W")] *= m
        adam_step(state, params, grads, cfg.learning_rate)
        for i, m in net.masks.items():
            params[(i, "W")] *= m
    return net


def retrain(net: Network, data, cfg: TrainConfig) -> Network:
    return train(net, data, cfg, steps=cfg.retrain_steps)


def predict_logits(net: Network, X, batch_size: int = 1000) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = [net.forward(X[i:i + batch_size]) for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,) + net.output_shape)


def evaluate(net: Network, data) -> float:
    """Fraction of examples whose argmax logit differs from the label (eval-mode BN)."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = predict_logits(net, data.inputs).argmax(axis=1)
    return float(np.mean(pred != data.labels))


def accuracy(net: Network, data) -> float:
    return 1.0 - evaluate(net, data)
