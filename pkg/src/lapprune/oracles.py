"""Independent reference computations used to pin down criteria and selection.

Everything here is deliberately naive: explicit matrix products, exhaustive
enumeration, index arithmetic. Nothing imports the scoring code.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .tensor import conv2d

BRUTE_FORCE_CAP = 20
BQP_CAP = 12
CIRCULANT_CAP = 64
FD_WEIGHT_CAP = 500


class OracleSizeError(ValueError):
    """Instance exceeds the size an exhaustive oracle is willing to handle."""


@dataclass
class BlockInstance:
    W_prev: np.ndarray
    W_cur: np.ndarray
    W_next: np.ndarray

    def __post_init__(self):
        self.W_prev = np.atleast_2d(np.asarray(self.W_prev, dtype=np.float64))
        self.W_cur = np.atleast_2d(np.asarray(self.W_cur, dtype=np.float64))
        self.W_next = np.atleast_2d(np.asarray(self.W_next, dtype=np.float64))
        if self.W_cur.shape[1] != self.W_prev.shape[0] or self.W_next.shape[1] != self.W_cur.shape[0]:
            raise ValueError(f"shapes {self.W_next.shape} x {self.W_cur.shape} x {self.W_prev.shape} "
                             "do not compose")

    @classmethod
    def random(cls, rng, cur=(3, 4), d_in=3, d_out=3):
        rng = np.random.default_rng(rng)
        return cls(rng.standard_normal((cur[1], d_in)), rng.standard_normal(cur),
                   rng.standard_normal((d_out, cur[0])))

    def atoms(self) -> np.ndarray:
        """Row e holds vec(W_next e_k w e_j^T W_prev) for flat weight index e = (k, j)."""
        k, j = np.unravel_index(np.arange(self.W_cur.size), self.W_cur.shape)
        outer = self.W_next.T[k][:, :, None] * self.W_prev[j][:, None, :]
        return (self.W_cur.ravel()[:, None, None] * outer).reshape(self.W_cur.size, -1)


def block_distortion(inst: BlockInstance, M) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.shape != inst.W_cur.shape:
        raise ValueError(f"mask shape {M.shape} != weight shape {inst.W_cur.shape}")
    full = inst.W_next @ inst.W_cur @ inst.W_prev
    pruned = inst.W_next @ (M * inst.W_cur) @ inst.W_prev
    return float(np.linalg.norm(full - pruned))


def _distortions_sq(gram, survivors, n):
    pruned = np.ones((len(survivors), n))
    np.put_along_axis(pruned, survivors, 0.0, axis=1)
    return np.einsum("bi,ij,bj->b", pruned, gram, pruned)


def brute_force_mask(inst: BlockInstance, keep: int, chunk: int = 20000):
    """Exhaustive minimiser of block distortion over masks with exactly ``keep`` survivors.

    Ties resolve to the mask whose sorted survivor indices come first
    lexicographically, i.e. the lowest flat indices survive.
    """
    n = inst.W_cur.size
    if n > BRUTE_FORCE_CAP:
        raise OracleSizeError(f"{n} weights exceeds the exhaustive cap of {BRUTE_FORCE_CAP}")
    if not 0 <= keep <= n:
        raise ValueError(f"keep={keep} outside [0, {n}]")
    V = inst.atoms()
    gram = V @ V.T
    best, best_set = np.inf, None
    combos = itertools.combinations(range(n), keep)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp).reshape(-1, keep)
        if len(block) == 0:
            break
        d = _distortions_sq(gram, block, n)
        i = int(np.argmin(d))
        if d[i] < best:
            best, best_set = d[i], block[i]
        if len(block) < chunk:
            break
    mask = np.zeros(n)
    mask[best_set] = 1.0
    mask = mask.reshape(inst.W_cur.shape)
    return mask, block_distortion(inst, mask)


def _subset_sums(V):
    """All 2^m subset sums of the rows of V, grouped by subset size.

    Returns (sums, codes, starts): rows starts[k]:starts[k+1] hold the subsets
    of size k, ``codes`` their membership bitmasks.
    """
    m, r = V.shape
    sums = np.zeros((1, r))
    pop = np.zeros(1, dtype=np.int64)
    for row in V:
        sums = np.concatenate([sums, sums + row])
        pop = np.concatenate([pop, pop + 1])
    codes = np.argsort(pop, kind="stable")
    starts = np.searchsorted(pop[codes], np.arange(m + 2))
    return sums[codes], codes, starts


def exact_mask(inst: BlockInstance, keep: int, upper_bound: float | None = None):
    """Exact block-distortion minimiser by meet in the middle.

    The pruned set's atoms must sum to the smallest norm. Atoms are split in
    two halves; for each split of the prune count, every subset sum of one half
    queries a k-d tree over the other half for its nearest negated partner.
    ``upper_bound`` (any achievable distortion) prunes the search. Feasible
    for a few dozen weights when the atom dimension is small. Ties are not
    broken by index.
    """
    n = inst.W_cur.size
    drop = n - keep
    if not 0 <= keep <= n:
        raise ValueError(f"keep={keep} outside [0, {n}]")
    V = inst.atoms()
    half = n // 2
    sa, ca, qa = _subset_sums(V[:half])
    sb, cb, qb = _subset_sums(V[half:])
    bound = np.inf if upper_bound is None else float(upper_bound) * (1 + 1e-9) + 1e-12
    best, best_code = np.inf, None
    for ka in range(max(0, drop - (n - half)), min(half, drop) + 1):
        kb = drop - ka
        A = slice(qa[ka], qa[ka + 1])
        B = slice(qb[kb], qb[kb + 1])
        tree = cKDTree(sb[B])
        dist, idx = tree.query(-sa[A], k=1, distance_upper_bound=min(bound, best))
        i = int(np.argmin(dist))
        if np.isfinite(dist[i]) and dist[i] < best:
            best = dist[i]
            best_code = (int(ca[A][i]), int(cb[B][idx[i]]))
    if best_code is None:
        raise RuntimeError("upper_bound is below the optimum; no mask found")
    pruned = np.zeros(n, dtype=bool)
    for bit in range(half):
        pruned[bit] = bool(best_code[0] >> bit & 1)
    for bit in range(n - half):
        pruned[half + bit] = bool(best_code[1] >> bit & 1)
    mask = (~pruned).astype(np.float64).reshape(inst.W_cur.shape)
    return mask, block_distortion(inst, mask)


def chain_product(chain) -> np.ndarray:
    out = np.asarray(chain[0], dtype=np.float64)
    for W in chain[1:]:
        out = np.asarray(W, dtype=np.float64) @ out
    return out


def whole_chain_distortion(chain, i: int, index) -> float:
    """Distortion of the whole product W_L...W_1 when weight ``index`` of ``chain[i]`` is zeroed."""
    chain = [np.asarray(W, dtype=np.float64) for W in chain]
    if any(W.ndim != 2 for W in chain):
        raise ValueError("whole_chain_distortion needs a chain of dense matrices")
    for a, b in zip(chain, chain[1:]):
        if b.shape[1] != a.shape[0]:
            raise ValueError("chain shapes do not compose")
    pruned = [W.copy() for W in chain]
    pruned[i][index] = 0.0
    return float(np.linalg.norm(chain_product(chain) - chain_product(pruned)))


def jacobi_eigh(A, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    U = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            order = np.argsort(np.diag(A), kind="stable")
            return np.diag(A)[order], U[:, order]
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q], R[q, p] = s, -s
                A = R.T @ A @ R
                U = U @ R
    raise np.linalg.LinAlgError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


@dataclass
class BqpResult:
    H: np.ndarray
    shift: float
    W1: np.ndarray
    xs: np.ndarray
    quadratic: np.ndarray
    factored: np.ndarray

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.quadratic - self.factored))) if len(self.xs) else 0.0


def bqp_reduce(A) -> BqpResult:
    """Factor a binary quadratic program as a squared-norm (pruning) objective.

    H = A - lambda_min I when lambda_min < 0 (else H = A), H = U diag(L) U^T and
    W1 = sqrt(L) U^T, so x^T H x = ||W1 x||^2 for every binary x.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if n > BQP_CAP:
        raise OracleSizeError(f"n={n} exceeds the enumeration cap of {BQP_CAP}")
    lam, _ = jacobi_eigh(A)
    shift = float(lam[0]) if lam[0] < 0 else 0.0
    H = A - shift * np.eye(n)
    L, U = jacobi_eigh(H)
    W1 = np.sqrt(np.clip(L, 0.0, None))[:, None] * U.T
    xs = np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)
    quad = np.einsum("bi,ij,bj->b", xs, H, xs)
    fact = np.sum((xs @ W1.T) ** 2, axis=1)
    return BqpResult(H, shift, W1, xs, quad, fact)


def circulant_jacobian(kernel, spatial) -> np.ndarray:
    """Matrix of single-channel circular 'same' convolution on an (h, w) grid.

    Built purely from index arithmetic: output (r, c) reads input
    ((r + a - top) mod h, (c + b - left) mod w) with weight kernel[a, b].
    """
    K = np.asarray(kernel, dtype=np.float64)
    h, w = spatial
    if h * w > CIRCULANT_CAP:
        raise OracleSizeError(f"{h}x{w} grid exceeds the cap of {CIRCULANT_CAP} positions")
    kh, kw = K.shape
    top, left = (kh - 1) // 2, (kw - 1) // 2
    J = np.zeros((h * w, h * w))
    for r in range(h):
        for c in range(w):
            for a in range(kh):
                for b in range(kw):
                    J[r * w + c, ((r + a - top) % h) * w + (c + b - left) % w] += K[a, b]
    return J


def basis_probe(kernel, spatial) -> np.ndarray:
    """Jacobian of conv2d(circular) recovered column by column from basis inputs."""
    h, w = spatial
    K = np.asarray(kernel, dtype=np.float64)[None, None]
    cols = []
    for e in np.eye(h * w):
        cols.append(conv2d(e.reshape(1, 1, h, w), K, padding="circular").ravel())
    return np.stack(cols, axis=1)


def distortion_bound_check(W, M, samples=100, seed: int = 0) -> float:
    """Largest ||Wx - (M*W)x|| / (||W - M*W||_F ||x||) over sampled or given x."""
    W = np.asarray(W, dtype=np.float64)
    D = W - np.asarray(M, dtype=np.float64) * W
    if np.isscalar(samples):
        X = np.random.default_rng(seed).standard_normal((int(samples), W.shape[1]))
    else:
        X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    lhs = np.linalg.norm(X @ D.T, axis=1)
    rhs = np.linalg.norm(D) * np.linalg.norm(X, axis=1)
    ratios = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)
    return float(ratios.max()) if len(ratios) else 0.0


def fd_step(w) -> np.ndarray:
    return 1e-3 * np.maximum(1.0, np.abs(w))


def second_difference(f, x, h=None) -> np.ndarray:
    """Central second difference of scalar ``f`` along each coordinate of ``x``."""
    x = np.array(x, dtype=np.float64)
    h = fd_step(x) if h is None else np.broadcast_to(np.asarray(h, dtype=np.float64), x.shape)
    base = f(x)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h[idx]
        up = f(x)
        x[idx] = orig - h[idx]
        down = f(x)
        x[idx] = orig
        out[idx] = (up - 2.0 * base + down) / h[idx] ** 2
    return out


def numeric_gradient(f, x, h: float = 1e-6) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def finite_diff_hessian_diag(net, data, h=None) -> dict:
    """Second-difference diagonal of the mean cross-entropy for each prunable weight.

    Uses eval-mode batch norm, matching the analytic diagonal.
    """
    from .nn.network import cross_entropy

    total = net.n_weights()
    if total > FD_WEIGHT_CAP:
        raise OracleSizeError(f"{total} weights exceeds the finite-difference cap of {FD_WEIGHT_CAP}")
    out = {}
    for i in net.prunable:
        layer = net.layers[i]
        original = layer.params["W"].copy()

        def loss(W, layer=layer):
            layer.params["W"] = W
            return cross_entropy(net.forward(data.inputs), data.labels)

        try:
            out[i] = second_difference(loss, original, h)
        finally:
            layer.params["W"] = original
    return out
