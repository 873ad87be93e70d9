"""Compiled single-pass kernels for dense lookahead scoring.

NumPy needs one pass per factor; these read each weight matrix once for its
slice norms and once more to write the scores.
"""

import numpy as np
from numba import njit

# reassociation lets the row reductions vectorise; NaN/inf semantics are kept
_FAST = {"reassoc", "contract"}


@njit(cache=True, fastmath=_FAST)
def row_sq(W):
    o, u = W.shape
    rows = np.empty(o)
    for a in range(o):
        r = 0.0
        for b in range(u):
            r += W[a, b] * W[a, b]
        rows[a] = r
    return rows


@njit(cache=True, fastmath=_FAST)
def col_sq(W):
    o, u = W.shape
    cols = np.zeros(u)
    for a in range(o):
        for b in range(u):
            cols[b] += W[a, b] * W[a, b]
    return cols


@njit(cache=True, fastmath=_FAST)
def row_col_sq(W):
    o, u = W.shape
    rows = np.empty(o)
    cols = np.zeros(u)
    for a in range(o):
        r = 0.0
        for b in range(u):
            s = W[a, b] * W[a, b]
            r += s
            cols[b] += s
        rows[a] = r
    return rows, cols


@njit(cache=True, fastmath=_FAST)
def scaled_abs(W, post, pre):
    """|W[a, b]| * post[a] * pre[b]."""
    o, u = W.shape
    out = np.empty_like(W)
    for a in range(o):
        pa = post[a]
        for b in range(u):
            out[a, b] = abs(W[a, b]) * (pa * pre[b])
    return out
