"""Data-dependent statistics used by LAP-act and OBD-style criteria."""

from __future__ import annotations

import numpy as np

from .network import Network, softmax


def relu_owner(net: Network, act_index: int):
    """Prunable layer whose outputs feed the ReLU at ``act_index`` (BN may sit between)."""
    j = act_index - 1
    while j >= 0 and net.layers[j].kind == "batchnorm":
        j -= 1
    if j >= 0 and j in net.prunable:
        return j
    return None


def _relu_sites(net: Network) -> dict:
    sites = {}
    for a, layer in enumerate(net.layers):
        if layer.kind == "activation" and layer.fn == "relu":
            owner = relu_owner(net, a)
            if owner is not None:
                sites[a] = owner
    return sites


def estimate_activation_probs(net: Network, data, batch_size: int = 1000) -> dict:
    """Empirical P(pre-activation > 0) for every ReLU unit, keyed by owning prunable layer.

    Dense owners map to arrays of shape (units,), conv owners to (channels, H, W).
    Networks without ReLUs give an empty dict.
    """
    sites = _relu_sites(net)
    if not sites:
        return {}
    if len(data) == 0:
        raise ValueError("activation statistics need data")
    counts = {}
    X = data.inputs
    for start in range(0, len(X), batch_size):
        x = X[start:start + batch_size]
        for a, layer in enumerate(net.layers):
            if a in sites:
                c = (x > 0).sum(axis=0)
                counts[sites[a]] = counts.get(sites[a], 0) + c
            x, _ = layer.forward(x)
    return {i: c / len(X) for i, c in counts.items()}


def hessian_diagonal(net: Network, data, batch_size: int = 256, loss_scale: float = 1.0) -> dict:
    """Gauss-Newton diagonal of the mean cross-entropy w.r.t. every prunable weight.

    The softmax cross-entropy Hessian in logit space, diag(p) - p p^T, is factored
    as S S^T with columns sqrt(p_c) (e_c - p). Each column is backpropagated and the
    squared per-sample weight gradients are summed, so entries are nonnegative.
    Evaluated with eval-mode batch norm.
    """
    if len(data) == 0:
        raise ValueError("hessian_diagonal needs data")
    prunable = set(net.prunable)
    diag = {i: np.zeros_like(net.layers[i].weight) for i in prunable}
    first = min(prunable)
    X, y = data.inputs, data.labels
    for start in range(0, len(X), batch_size):
        logits, caches = net.forward(X[start:start + batch_size], keep_caches=True)
        p = softmax(logits)
        sq = np.sqrt(p)
        for c in range(p.shape[1]):
            dout = -p * sq[:, c:c + 1]
            dout[:, c] += sq[:, c]
            for i in range(len(net.layers) - 1, first - 1, -1):
                layer = net.layers[i]
                if i in prunable:
                    diag[i] += layer.weight_grad_sq(dout, caches[i])
                if i > first:
                    dout, _ = layer.backward(dout, caches[i])
    return {i: loss_scale * d / len(X) for i, d in diag.items()}
