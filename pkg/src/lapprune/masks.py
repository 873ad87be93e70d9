"""Turning scores into binary masks.

Masks are float arrays of 0/1 with the shape of their weight tensor, keyed by
layer index. Ties between equal scores are broken toward the lower flat
(row-major) index, which survives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .criteria import LOOKAHEAD_FAMILY, canonical_criterion, compute_scores, score_layer
from .nn.network import Network
from .nn.stats import estimate_activation_probs, hessian_diagonal

SCOPES = ("layerwise", "global", "global_normalized")
STRUCTURES = ("unstructured", "channel_l1", "channel_l2")
ORDERS = ("simultaneous", "forward", "backward")


@dataclass(frozen=True)
class SparsitySchedule:
    """Keep fractions: conv layers p**tau, dense q**tau, last dense ((1+q)/2)**tau."""

    p: float = 0.0
    q: float = 0.5
    tau: int = 0

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.tau < 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")

    def keep_fractions(self, net: Network) -> dict:
        dense = [i for i in net.prunable if net.layers[i].kind == "dense"]
        last_dense = dense[-1] if dense else None
        out = {}
        for i in net.prunable:
            if net.layers[i].kind == "conv2d":
                out[i] = self.p ** self.tau
            elif i == last_dense:
                out[i] = ((1.0 + self.q) / 2.0) ** self.tau
            else:
                out[i] = self.q ** self.tau
        return out

    def keep_counts(self, net: Network) -> dict:
        return {i: keep_count(f, net.weight(i).size) for i, f in self.keep_fractions(net).items()}

    def surviving_fraction(self, net: Network) -> float:
        counts = self.keep_counts(net)
        return sum(counts.values()) / net.n_weights()


def keep_count(fraction: float, size: int) -> int:
    """round(fraction * size) with halves rounded up, clamped to [1, size]."""
    return int(min(size, max(1, math.floor(fraction * size + 0.5))))


@dataclass
class PruneConfig:
    criterion: str = "LAP"
    schedule: SparsitySchedule = SparsitySchedule()
    scope: str = "layerwise"
    structure: str = "unstructured"
    order: str = "simultaneous"
    sequential_steps: int = 1
    seed: int = 0
    recompute_stats: bool = False

    def __post_init__(self):
        self.criterion = canonical_criterion(self.criterion)
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}")
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if self.sequential_steps < 1:
            raise ValueError("sequential_steps must be at least 1")
        if self.order != "simultaneous" and self.criterion not in LOOKAHEAD_FAMILY:
            raise ValueError(f"{self.order} ordering only applies to lookahead criteria")
        if self.order != "simultaneous" and self.scope != "layerwise":
            raise ValueError("ordered pruning requires layerwise scope")
        if self.structure != "unstructured":
            if self.criterion == "LAP_all":
                raise ValueError("channel structure is not supported with LAP-all")
            if self.scope != "layerwise":
                raise ValueError("channel structure requires layerwise scope")


# ------------------------------------------------------------ selection


def _respect(scores, alive):
    if alive is None:
        return np.asarray(scores, dtype=np.float64)
    s = np.array(scores, dtype=np.float64)
    s[np.asarray(alive) == 0] = -1.0
    return s


def select_layerwise(scores, keep: int, alive=None) -> np.ndarray:
    """Mask keeping the ``keep`` highest scores; pruned entries of ``alive`` stay pruned."""
    s = _respect(scores, alive)
    if not 0 <= keep <= s.size:
        raise ValueError(f"keep={keep} outside [0, {s.size}]")
    order = np.argsort(-s.ravel(), kind="stable")
    mask = np.zeros(s.size)
    mask[order[:keep]] = 1.0
    return mask.reshape(s.shape)


def select_global(scores: dict, keep: int, normalize: bool = False, alive=None) -> dict:
    """One threshold over all layers; optionally divide each layer by its Frobenius norm."""
    alive = alive or {}
    keys = list(scores)
    parts = []
    for k in keys:
        s = np.asarray(scores[k], dtype=np.float64)
        if normalize:
            norm = np.linalg.norm(s)
            s = s / norm if norm > 0 else s
        parts.append(_respect(s, alive.get(k)).ravel())
    pooled = np.concatenate(parts)
    flat = select_layerwise(pooled, keep)
    out, pos = {}, 0
    for k, part in zip(keys, parts):
        out[k] = flat[pos:pos + part.size].reshape(np.shape(scores[k]))
        pos += part.size
    return out


def channel_scores(scores, norm: str = "l1") -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).reshape(np.shape(scores)[0], -1)
    if norm == "l1":
        return np.abs(s).sum(axis=1)
    if norm == "l2":
        return np.sqrt((s * s).sum(axis=1))
    raise ValueError(f"channel norm must be 'l1' or 'l2', got {norm!r}")


def select_channels(scores, keep_channels: int, norm: str = "l1", alive=None) -> np.ndarray:
    """Keep whole output channels (rows) ranked by their aggregated score."""
    agg = channel_scores(scores, norm)
    alive_ch = None
    if alive is not None:
        alive_ch = np.asarray(alive).reshape(len(agg), -1).any(axis=1)
    rows = select_layerwise(agg, keep_channels, alive_ch)
    shape = np.shape(scores)
    return np.broadcast_to(rows.reshape((-1,) + (1,) * (len(shape) - 1)), shape).copy()


# ------------------------------------------------------------ orchestration


def _chunk_targets(alive: int, final: int, steps: int) -> list:
    """Intermediate keep counts removing (alive - final) in ``steps`` equal chunks."""
    budget = max(0, alive - final)
    chunk = budget // steps
    return [alive - chunk * t for t in range(1, steps)] + [min(alive, final)]


def _data_needs(criterion):
    return {"LAP_act": "stats", "OBD": "hessian", "OBD_LAP": "hessian"}.get(criterion)


def prune(net: Network, config: PruneConfig, data=None, stats=None, hessian=None):
    """Prune a copy of ``net``; returns (pruned network, masks).

    Existing masks are respected: pruned weights stay pruned and the keep
    counts of ``config.schedule`` are measured against the dense size, so
    re-pruning at the same level is a no-op.
    """
    net = net.copy()
    crit = config.criterion
    need = _data_needs(crit)
    if need == "stats" and stats is None:
        if data is None:
            raise ValueError("LAP-act needs activation statistics or data to estimate them")
        stats = estimate_activation_probs(net, data)
    if need == "hessian" and hessian is None:
        if data is None:
            raise ValueError(f"{crit} needs a hessian diagonal or data to compute it")
        hessian = hessian_diagonal(net, data)

    layers = net.prunable
    steps = config.sequential_steps
    alive = {i: net.masks.get(i, np.ones_like(net.weight(i))) for i in layers}
    fractions = config.schedule.keep_fractions(net)
    channel = config.structure != "unstructured"
    norm = config.structure.split("_")[-1] if channel else None

    if channel:
        n_units = {i: net.weight(i).shape[0] for i in layers}
        live = {i: int(alive[i].reshape(n_units[i], -1).any(axis=1).sum()) for i in layers}
        finals = {i: keep_count(fractions[i], n_units[i]) for i in layers}
    else:
        live = {i: int(alive[i].sum()) for i in layers}
        finals = {i: keep_count(fractions[i], net.weight(i).size) for i in layers}
    targets = {i: _chunk_targets(live[i], finals[i], steps) for i in layers}
    if config.scope != "layerwise":
        total_live = sum(live.values())
        total_final = sum(finals.values())
        global_targets = _chunk_targets(total_live, total_final, steps)

    def select(i, s, t):
        if channel:
            return select_channels(s, targets[i][t], norm, alive=net.masks.get(i))
        return select_layerwise(s, targets[i][t], alive=net.masks.get(i))

    for t in range(steps):
        if t > 0 and config.recompute_stats and data is not None:
            if need == "stats":
                stats = estimate_activation_probs(net, data)
            elif need == "hessian":
                hessian = hessian_diagonal(net, data)
        if config.order == "simultaneous":
            scores = compute_scores(net, crit, stats=stats, hessian=hessian, seed=config.seed + t)
            if config.scope == "layerwise":
                masks = {i: select(i, scores[i], t) for i in layers}
            else:
                masks = select_global(scores, global_targets[t],
                                      normalize=config.scope == "global_normalized",
                                      alive={i: net.masks.get(i) for i in layers})
            net.attach_masks(masks)
        else:
            seq = layers if config.order == "forward" else list(reversed(layers))
            for i in seq:
                s = score_layer(net, i, crit, stats=stats, hessian=hessian, seed=config.seed + t)
                net.attach_masks({i: select(i, s, t)})
    return net, {i: net.masks[i].copy() for i in layers}
