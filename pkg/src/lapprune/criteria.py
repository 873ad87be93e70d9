"""Per-weight saliency scores.

A score tensor has the shape of its weight tensor and nonnegative entries;
pruning removes the lowest-scoring weights. Lookahead scores multiply each
weight's magnitude by the norm of the preceding layer's output slice that
feeds the weight's input unit and the norm of the succeeding layer's input
slice fed by the weight's output unit. Neighbours are the nearest dense/conv
layers, skipping activation, pooling, flatten and batch-norm layers.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .nn.network import Network
from .nn.stats import _relu_sites

CRITERIA = ("MP", "RP", "LFP", "LBP", "LAP", "LAP_all", "LAP_act", "OBD", "OBD_LAP")
LOOKAHEAD_FAMILY = ("LFP", "LBP", "LAP", "LAP_all", "LAP_act", "OBD_LAP")
_ALIASES = {"LAP-ALL": "LAP_all", "LAP_ALL": "LAP_all", "LAP-ACT": "LAP_act", "LAP_ACT": "LAP_act",
            "OBD+LAP": "OBD_LAP", "OBD-LAP": "OBD_LAP", "OBD_LAP": "OBD_LAP"}


def canonical_criterion(tag: str) -> str:
    up = tag.strip().upper()
    name = _ALIASES.get(up, up)
    if name not in CRITERIA:
        raise ValueError(f"unknown criterion {tag!r}; choose from {CRITERIA}")
    return name


# ------------------------------------------------------------ neighbours


def prev_prunable(net: Network, i: int):
    before = [j for j in net.prunable if j < i]
    return before[-1] if before else None


def next_prunable(net: Network, i: int):
    after = [j for j in net.prunable if j > i]
    return after[0] if after else None


def _units_in(W):
    return W.shape[1]


def _expand(vec, units):
    """Map per-unit values of a producer onto ``units`` consumer inputs (flatten boundary)."""
    if len(vec) == units:
        return vec
    if units % len(vec):
        raise ValueError(f"cannot map {len(vec)} producer units onto {units} consumer inputs")
    return np.repeat(vec, units // len(vec))


def _bn_between(net: Network, lo: int, hi: int):
    for j in range(lo + 1, hi):
        if net.layers[j].kind == "batchnorm":
            return net.layers[j]
    return None


def bn_factors(net: Network, i: int):
    """(pre, post): |BN scale| on layer ``i``'s input units and output units.

    The scale is the slope of the eval-mode affine map, gamma / sqrt(var + eps);
    units with no adjacent batch norm get 1.
    """
    W = net.weight(i)
    pre = np.ones(_units_in(W))
    post = np.ones(W.shape[0])
    p = prev_prunable(net, i)
    if p is not None:
        bn = _bn_between(net, p, i)
        if bn is not None:
            pre = _expand(np.abs(bn.effective_scale()), _units_in(W))
    n = next_prunable(net, i)
    bn = _bn_between(net, i, len(net.layers) if n is None else n)
    if bn is not None:
        post = np.abs(bn.effective_scale())
    return pre, post


def _out_norms(W, row_scale=None):
    flat = W.reshape(W.shape[0], -1)
    sq = np.einsum("ij,ij->i", flat, flat)
    if row_scale is not None:
        sq = sq * row_scale ** 2
    return np.sqrt(sq)


def _in_norms(W, units, row_scale=None):
    """Norm of the consumer slice attached to each of ``units`` producer outputs."""
    grouped = W.reshape(W.shape[0], units, -1)
    sq = np.einsum("iuk,iuk->iu", grouped, grouped)
    if row_scale is not None:
        sq = sq * (row_scale ** 2)[:, None]
    return np.sqrt(sq.sum(axis=0))


def _broadcast_product(mag, post, pre):
    # scales ``mag`` in place; callers pass a fresh array
    mag *= post.reshape((-1,) + (1,) * (mag.ndim - 1))
    mag *= pre.reshape((1, -1) + (1,) * (mag.ndim - 2))
    return mag


def lookahead_factors(net: Network, i: int, use_prev=True, use_next=True, weights=None,
                      row_scale=None, use_bn=True):
    """Per-input-unit and per-output-unit multipliers of layer ``i``'s lookahead score.

    ``weights`` optionally replaces layer tensors (layer -> array of the same shape);
    ``row_scale`` optionally rescales output slices (layer -> per-output vector).
    """
    weights = weights or {}
    row_scale = row_scale or {}
    W = weights.get(i, net.weight(i))
    pre, post = bn_factors(net, i) if use_bn else (np.ones(_units_in(W)), np.ones(W.shape[0]))
    if use_prev:
        p = prev_prunable(net, i)
        if p is not None:
            Wp = weights.get(p, net.weight(p))
            pre = pre * _expand(_out_norms(Wp, row_scale.get(p)), _units_in(W))
    if use_next:
        n = next_prunable(net, i)
        if n is not None:
            Wn = weights.get(n, net.weight(n))
            post = post * _in_norms(Wn, W.shape[0], row_scale.get(n))
    return pre, post


# ------------------------------------------------------------ criteria


def score_mp(W) -> np.ndarray:
    return np.abs(np.asarray(W, dtype=np.float64))


def score_random(W, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=np.shape(W))


def score_lap(net: Network, i: int, use_prev: bool = True, use_next: bool = True) -> np.ndarray:
    """Lookahead distortion of every weight in layer ``i`` (BN-corrected).

    ``use_prev=False`` gives LFP (forward-looking only), ``use_next=False`` gives
    LBP; with both off the score is the plain magnitude.
    """
    if not (use_prev or use_next):
        return score_mp(net.weight(i))
    pre, post = lookahead_factors(net, i, use_prev, use_next)
    return _broadcast_product(np.abs(net.weight(i)), post, pre)


def fast_lap_squared(W_prev, W, W_next) -> np.ndarray:
    """Squared lookahead scores of a dense triple from three reduced tensors.

    Either neighbour may be None (boundary layer).
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("fast_lap_squared handles dense (2-D) weights only")
    out = W * W
    if W_next is not None:
        W_next = np.asarray(W_next, dtype=np.float64)
        if W_next.shape[1] != W.shape[0]:
            raise ValueError(f"next layer {W_next.shape} does not consume {W.shape[0]} outputs")
        out *= (W_next * W_next).sum(axis=0)[:, None]
    if W_prev is not None:
        W_prev = np.asarray(W_prev, dtype=np.float64)
        if W_prev.shape[0] != W.shape[1]:
            raise ValueError(f"previous layer {W_prev.shape} does not feed {W.shape[1]} inputs")
        out *= (W_prev * W_prev).sum(axis=1)[None, :]
    return out


def score_obd(W, h) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if W.shape != h.shape:
        raise ValueError(f"hessian diagonal shape {h.shape} != weight shape {W.shape}")
    return h * W * W / 2.0


def score_obd_lap(net: Network, i: int, hessian: dict) -> np.ndarray:
    """Lookahead product with sqrt(OBD saliency) standing in for every magnitude."""
    needed = [j for j in (prev_prunable(net, i), i, next_prunable(net, i)) if j is not None]
    missing = [j for j in needed if j not in hessian]
    if missing:
        raise ValueError(f"hessian diagonal missing for layers {missing}")
    roots = {j: np.sqrt(np.maximum(score_obd(net.weight(j), hessian[j]), 0.0)) for j in needed}
    pre, post = lookahead_factors(net, i, weights=roots)
    return _broadcast_product(roots[i], post, pre)


def score_lap_act(net: Network, i: int, stats: dict) -> np.ndarray:
    """Lookahead score on activation-rescaled tensors.

    Each output slice of a layer is scaled by the sum of sqrt(p) over the ReLUs
    it feeds; the weight itself is scaled by its own output slice's factor.
    """
    if stats is None:
        raise ValueError("LAP-act needs activation statistics; run estimate_activation_probs first")
    owners = set(_relu_sites(net).values())
    shapes = _unit_positions(net)
    layers = [j for j in (prev_prunable(net, i), i, next_prunable(net, i)) if j is not None]
    scale = {}
    for m in layers:
        if m in owners:
            if m not in stats:
                raise ValueError(f"activation statistics missing for layer {m}; "
                                 "run estimate_activation_probs first")
            p = np.asarray(stats[m], dtype=np.float64)
            scale[m] = np.sqrt(p).reshape(net.weight(m).shape[0], -1).sum(axis=1)
        else:
            scale[m] = np.full(net.weight(m).shape[0], float(shapes[m]))
    pre, post = lookahead_factors(net, i, row_scale=scale)
    mag = np.abs(net.weight(i)) * scale[i].reshape((-1,) + (1,) * (net.weight(i).ndim - 1))
    return _broadcast_product(mag, post, pre)


def _unit_positions(net: Network) -> dict:
    """Number of spatial positions per output unit of each prunable layer."""
    out, shape = {}, net.input_shape
    for j, layer in enumerate(net.layers):
        shape = layer.output_shape(shape)
        if j in net.prunable:
            out[j] = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    return out


def score_lap_all(net: Network, i: int) -> np.ndarray:
    """Lookahead over the whole linearised chain of dense layers.

    Activations and batch norms are ignored; the preceding product
    W_{i-1}...W_1 and succeeding product W_L...W_{i+1} replace the neighbours.
    """
    chain = net.prunable
    if any(net.layers[j].kind != "dense" for j in chain):
        raise ValueError("LAP-all supports fully-connected chains only")
    pos = chain.index(i)
    W = net.weight(i)
    pre = np.ones(W.shape[1])
    post = np.ones(W.shape[0])
    if pos > 0:
        P = net.weight(chain[0])
        for j in chain[1:pos]:
            P = net.weight(j) @ P
        pre = np.sqrt(np.einsum("ij,ij->i", P, P))
    if pos < len(chain) - 1:
        S = net.weight(chain[-1])
        for j in reversed(chain[pos + 1:-1]):
            S = S @ net.weight(j)
        post = np.sqrt(np.einsum("ij,ij->j", S, S))
    return _broadcast_product(np.abs(W), post, pre)


def score_layer(net: Network, i: int, criterion: str, stats=None, hessian=None, seed: int = 0):
    c = canonical_criterion(criterion)
    if c == "MP":
        return score_mp(net.weight(i))
    if c == "RP":
        return score_random(net.weight(i), np.random.SeedSequence([seed, i]))
    if c == "LAP":
        return score_lap(net, i)
    if c == "LFP":
        return score_lap(net, i, use_prev=False)
    if c == "LBP":
        return score_lap(net, i, use_next=False)
    if c == "LAP_all":
        return score_lap_all(net, i)
    if c == "LAP_act":
        return score_lap_act(net, i, stats)
    if hessian is None:
        raise ValueError(f"{c} needs a hessian diagonal; run hessian_diagonal first")
    if c == "OBD":
        if i not in hessian:
            raise ValueError(f"hessian diagonal missing for layer {i}")
        return score_obd(net.weight(i), hessian[i])
    return score_obd_lap(net, i, hessian)


def compute_scores(net: Network, criterion: str, layers=None, stats=None, hessian=None,
                   seed: int = 0) -> dict:
    """Scores for every prunable layer (or the given subset), keyed by layer index."""
    c = canonical_criterion(criterion)
    layers = net.prunable if layers is None else list(layers)
    if c in ("LAP", "LFP", "LBP"):
        return _lap_all_layers(net, layers, use_prev=c != "LFP", use_next=c != "LBP")
    return {i: score_layer(net, i, c, stats=stats, hessian=hessian, seed=seed) for i in layers}


def _dense_sq_norms(W, want_out, want_in):
    W = np.ascontiguousarray(W, dtype=np.float64)
    if want_out and want_in:
        return _kernels.row_col_sq(W)
    return (_kernels.row_sq(W) if want_out else None), (_kernels.col_sq(W) if want_in else None)


def _lap_all_layers(net, layers, use_prev, use_next):
    # each neighbour's slice norms are computed once and only where some layer uses them
    prev = {i: prev_prunable(net, i) for i in layers}
    nxt = {i: next_prunable(net, i) for i in layers}
    want_out = {prev[i] for i in layers if use_prev and prev[i] is not None}
    want_in = {nxt[i] for i in layers if use_next and nxt[i] is not None}
    out_norm, in_sq = {}, {}
    for j in want_out | want_in:
        W = net.weight(j)
        if W.ndim == 2:
            rows, cols = _dense_sq_norms(W, j in want_out, j in want_in)
            if rows is not None:
                out_norm[j] = np.sqrt(rows)
            if cols is not None:
                in_sq[j] = cols
            continue
        flat = W.reshape(W.shape[0], W.shape[1], -1)
        sq = np.einsum("ouk,ouk->ou", flat, flat)
        out_norm[j] = np.sqrt(sq.sum(axis=1))
        in_sq[j] = sq.sum(axis=0)
    scores = {}
    for i in layers:
        W = net.weight(i)
        pre, post = bn_factors(net, i)
        if prev[i] in want_out:
            pre = pre * _expand(out_norm[prev[i]], W.shape[1])
        if nxt[i] in want_in:
            post = post * np.sqrt(in_sq[nxt[i]].reshape(W.shape[0], -1).sum(axis=1))
        if W.ndim == 2:
            scores[i] = _kernels.scaled_abs(np.ascontiguousarray(W, dtype=np.float64), post, pre)
        else:
            scores[i] = _broadcast_product(np.abs(W), post, pre)
    return scores
