"""Random-weight treatment assignment functions and exact utilities.

A policy scores each instance from its own features plus the mean of its
neighbors' features, with arm-0 weights the exact negation of arm-1
weights, and assigns treatment probabilities by a two-arm softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class Policy:
    psi1: np.ndarray
    delta1: np.ndarray
    seed: int

    @property
    def psi0(self) -> np.ndarray:
        return -self.psi1

    @property
    def delta0(self) -> np.ndarray:
        return -self.delta1


def sample_policy(n_features: int, seed) -> Policy:
    """Rademacher weight vectors for arm 1; arm 0 is their negation."""
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    rng = np.random.default_rng(seed)
    psi1 = 2.0 * rng.integers(0, 2, size=n_features) - 1.0
    delta1 = 2.0 * rng.integers(0, 2, size=n_features) - 1.0
    return Policy(psi1=psi1, delta1=delta1, seed=seed)


def _neighbor_mean(values: np.ndarray, g: Graph) -> np.ndarray:
    """Mean of ``values`` over each node's neighbors; 0 for isolated nodes."""
    if g.self_loops:
        raise ValueError("policy scoring uses the base graph, without self-loops")
    sums = np.zeros(g.n)
    counts = np.diff(g.csr_offsets)
    seg = np.repeat(np.arange(g.n), counts)
    np.add.at(sums, seg, values[g.csr_targets])
    out = np.zeros(g.n)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz]
    return out


def policy_probs(p: Policy, features: np.ndarray, g: Graph) -> np.ndarray:
    """n x 2 matrix of per-arm assignment probabilities (rows sum to 1)."""
    if features.shape[0] != g.n:
        raise ValueError("feature rows must match graph size")
    logits = np.empty((g.n, 2))
    for t, (psi, delta) in ((0, (p.psi0, p.delta0)), (1, (p.psi1, p.delta1))):
        own = features @ psi
        logits[:, t] = own + _neighbor_mean(features @ delta, g)
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def true_utility(pi_mat: np.ndarray, y0: np.ndarray, y1: np.ndarray, idx) -> float:
    """Average policy-weighted potential outcome over the instances in idx."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("idx must be nonempty")
    contrib = pi_mat[idx, 0] * y0[idx] + pi_mat[idx, 1] * y1[idx]
    return float(contrib.mean())
