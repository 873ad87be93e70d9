"""Oracle suites runnable from the command line (``lapprune verify``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import fast_lap_squared, score_lap, score_lap_all, score_mp
from .masks import select_layerwise
from .nn.layers import Activation, Dense
from .nn.network import Network
from .oracles import (
    BlockInstance,
    basis_probe,
    block_distortion,
    bqp_reduce,
    brute_force_mask,
    circulant_jacobian,
    distortion_bound_check,
    whole_chain_distortion,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def chain_network(chain, activation="relu") -> Network:
    """Dense network computing W_L ... W_1 x (zero biases, activations in between)."""
    layers = []
    for k, W in enumerate(chain):
        W = np.asarray(W, dtype=np.float64)
        layers.append(Dense(W.copy(), np.zeros(W.shape[0])))
        if k < len(chain) - 1:
            layers.append(Activation(activation))
    return Network(layers, (np.shape(chain[0])[1],))


def block_network(inst: BlockInstance) -> Network:
    return chain_network([inst.W_prev, inst.W_cur, inst.W_next])


def check_lap_exactness(instances=100, seed=0, tol=1e-10) -> CheckResult:
    worst = 0.0
    for s in range(instances):
        inst = BlockInstance.random((seed, s), cur=(4, 5), d_in=3, d_out=3)
        scores = score_lap(block_network(inst), 2)
        for e in range(inst.W_cur.size):
            M = np.ones(inst.W_cur.size)
            M[e] = 0.0
            d = block_distortion(inst, M.reshape(inst.W_cur.shape))
            worst = max(worst, abs(scores.flat[e] - d) / max(d, 1e-300))
    return CheckResult("lap-exactness", worst <= tol, f"max relative error {worst:.3e} (tol {tol:g})")


def check_fast_formula(instances=100, seed=0, tol=1e-9) -> CheckResult:
    worst = 0.0
    for s in range(instances):
        inst = BlockInstance.random((seed, s), cur=(7, 6), d_in=5, d_out=4)
        ref = score_lap(block_network(inst), 2) ** 2
        fast = fast_lap_squared(inst.W_prev, inst.W_cur, inst.W_next)
        worst = max(worst, float(np.max(np.abs(fast - ref) / np.maximum(ref, 1e-300))))
    return CheckResult("fast-formula", worst <= tol, f"max relative error {worst:.3e} (tol {tol:g})")


def check_brute_force_dominance(instances=50, seed=0) -> CheckResult:
    bad = 0
    lap_total = mp_total = 0.0
    for s in range(instances):
        inst = BlockInstance.random((seed, s), cur=(3, 4), d_in=3, d_out=3)
        _, best = brute_force_mask(inst, 6)
        lap = block_distortion(inst, select_layerwise(score_lap(block_network(inst), 2), 6))
        mp = block_distortion(inst, select_layerwise(score_mp(inst.W_cur), 6))
        bad += (best > lap + 1e-12) or (best > mp + 1e-12)
        lap_total += lap
        mp_total += mp
    return CheckResult("brute-force-dominance", bad == 0,
                       f"{bad} violations; mean LAP {lap_total / instances:.4f} "
                       f"vs MP {mp_total / instances:.4f}")


def check_bqp(instances=20, seed=0, tol=1e-8) -> CheckResult:
    worst = 0.0
    for s in range(instances):
        rng = np.random.default_rng((seed, s))
        n = 4 + s % 3
        B = rng.standard_normal((n, n))
        worst = max(worst, bqp_reduce((B + B.T) / 2).max_gap)
    return CheckResult("bqp-reduction", worst <= tol, f"max column gap {worst:.3e} (tol {tol:g})")


def check_circulant(instances=10, seed=0) -> CheckResult:
    worst = 0.0
    for s in range(instances):
        rng = np.random.default_rng((seed, s))
        K = rng.standard_normal((3, 3))
        worst = max(worst, float(np.max(np.abs(circulant_jacobian(K, (4, 4)) - basis_probe(K, (4, 4))))))
    return CheckResult("circulant-conv", worst <= 1e-12, f"max entry gap {worst:.3e}")


def check_lap_all(instances=20, seed=0, tol=1e-10) -> CheckResult:
    worst = 0.0
    for s in range(instances):
        rng = np.random.default_rng((seed, s))
        dims = rng.integers(2, 6, size=6)
        chain = [rng.standard_normal((dims[k + 1], dims[k])) for k in range(5)]
        net = chain_network(chain)
        i = int(rng.integers(0, 5))
        scores = score_lap_all(net, net.prunable[i])
        for idx in np.ndindex(chain[i].shape):
            d = whole_chain_distortion(chain, i, idx)
            worst = max(worst, abs(scores[idx] - d) / max(d, 1e-300))
    return CheckResult("lap-all-chain", worst <= tol, f"max relative error {worst:.3e} (tol {tol:g})")


def check_distortion_bound(instances=20, seed=0) -> CheckResult:
    worst = 0.0
    for s in range(instances):
        rng = np.random.default_rng((seed, s))
        W = rng.standard_normal((6, 5))
        M = (rng.random(W.shape) < 0.5).astype(float)
        worst = max(worst, distortion_bound_check(W, M, samples=200, seed=s))
    return CheckResult("distortion-bound", worst <= 1 + 1e-12, f"max ratio {worst:.6f}")


CHECKS = (check_lap_exactness, check_fast_formula, check_brute_force_dominance, check_bqp,
          check_circulant, check_lap_all, check_distortion_bound)


def run_verification(seed: int = 0) -> list:
    return [check(seed=seed) for check in CHECKS]
