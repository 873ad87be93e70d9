"""Magnitude and lookahead pruning for small feed-forward networks."""

from .criteria import (
    CRITERIA,
    compute_scores,
    fast_lap_squared,
    score_lap,
    score_lap_act,
    score_lap_all,
    score_mp,
    score_obd,
    score_obd_lap,
    score_random,
)
from .masks import PruneConfig, SparsitySchedule, prune, select_channels, select_global, select_layerwise
from .nn import Network, architecture, glorot_init, train, evaluate

__version__ = "0.1.0"

__all__ = [
    "CRITERIA", "Network", "PruneConfig", "SparsitySchedule", "architecture", "compute_scores",
    "evaluate", "fast_lap_squared", "glorot_init", "prune", "score_lap", "score_lap_act",
    "score_lap_all", "score_mp", "score_obd", "score_obd_lap", "score_random",
    "select_channels", "select_global", "select_layerwise", "train",
]
