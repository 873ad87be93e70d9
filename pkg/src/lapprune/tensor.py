"""Dense tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Weight layouts
follow the (out, in) convention for dense layers and (out_ch, in_ch, kh, kw)
for convolution kernels, so ``W[j]`` is always the slice attached to the j-th
output unit.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PADDING_MODES = ("same-zero", "circular")


def as_tensor(values, name: str = "tensor") -> np.ndarray:
    """Return ``values`` as a finite float64 array with no zero-sized axis."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if 0 in arr.shape:
        raise ValueError(f"{name} has an empty dimension: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def frobenius_norm(t) -> float:
    t = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(t * t)))


def _check_weight(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim < 2:
        raise ValueError(f"weight tensor must have rank >= 2, got shape {W.shape}")
    return W


def out_slice_norms(W) -> np.ndarray:
    """Frobenius norm of ``W[j, ...]`` for every output index j."""
    W = _check_weight(W)
    flat = W.reshape(W.shape[0], -1)
    return np.sqrt(np.einsum("ij,ij->i", flat, flat))


def in_slice_norms(W) -> np.ndarray:
    """Frobenius norm of ``W[:, k, ...]`` for every input index k."""
    W = _check_weight(W)
    if W.ndim == 2:
        return np.sqrt(np.einsum("ij,ij->j", W, W))
    flat = W.reshape(W.shape[0], W.shape[1], -1)
    return np.sqrt(np.einsum("ikl,ikl->k", flat, flat))


def matmul(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("matmul expects two 2-D tensors")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    return A @ B


def _pad_amounts(kh: int, kw: int):
    top, left = (kh - 1) // 2, (kw - 1) // 2
    return (top, kh - 1 - top), (left, kw - 1 - left)


def pad2d(x: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    """Pad the two trailing axes so a stride-1 ``kh x kw`` window keeps the size."""
    if padding not in PADDING_MODES:
        raise ValueError(f"unknown padding mode {padding!r}")
    ph, pw = _pad_amounts(kh, kw)
    widths = [(0, 0)] * (x.ndim - 2) + [ph, pw]
    mode = "constant" if padding == "same-zero" else "wrap"
    return np.pad(x, widths, mode=mode)


def unpad2d_grad(g: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    """Adjoint of :func:`pad2d`: map a gradient on the padded array back."""
    (t, b), (l, r) = _pad_amounts(kh, kw)
    H = g.shape[-2] - t - b
    W = g.shape[-1] - l - r
    if padding == "same-zero":
        return g[..., t:t + H, l:l + W].copy()
    # circular: every padded cell aliases an interior cell
    out = np.zeros(g.shape[:-2] + (H, W))
    rows = (np.arange(g.shape[-2]) - t) % H
    cols = (np.arange(g.shape[-1]) - l) % W
    np.add.at(out, (..., rows[:, None], cols[None, :]), g)
    return out


def im2col(x: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    """Patches of a batch ``(N, C, H, W)`` as ``(N, H*W, C*kh*kw)``."""
    N, C, H, W = x.shape
    xp = pad2d(x, kh, kw, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N,C,H,W,kh,kw
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(N, H * W, C * kh * kw)


def conv2d(x, K, padding: str = "same-zero") -> np.ndarray:
    """Stride-1 cross-correlation of ``x`` (C, H, W) or (N, C, H, W) with ``K``.

    The output keeps the spatial size of the input.
    """
    x = np.asarray(x, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 4:
        raise ValueError(f"kernel must be (out_ch, in_ch, kh, kw), got {K.shape}")
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"input must be (C, H, W) or (N, C, H, W), got {x.shape}")
    if x.shape[1] != K.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {K.shape[1]}")
    N, _, H, W = x.shape
    O, _, kh, kw = K.shape
    cols = im2col(x, kh, kw, padding)
    out = cols @ K.reshape(O, -1).T  # N, HW, O
    out = out.transpose(0, 2, 1).reshape(N, O, H, W)
    return out[0] if single else out
