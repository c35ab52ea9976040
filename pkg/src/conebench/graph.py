"""Immutable undirected graphs with CSR neighbor storage.

Shared by the data generator (edge sampling, hidden weights) and the
attention layers (neighborhood aggregation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Graph:
    """Undirected graph over ``n`` nodes.

    ``edges`` holds each undirected pair once as (i, j) with i < j.
    ``csr_offsets``/``csr_targets`` give, for each node, its sorted
    neighbor list. ``self_loops`` marks a view produced by
    :func:`add_self_loops`; base graphs never store self-edges.
    """

    n: int
    edges: np.ndarray
    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    self_loops: bool = field(default=False)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def degree(self, i: int) -> int:
        self._check_index(i)
        return int(self.csr_offsets[i + 1] - self.csr_offsets[i])

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise ValueError(f"node index {i} out of range [0, {self.n})")


def build_graph(n: int, edge_list) -> Graph:
    """Build a canonical Graph from a possibly redundant edge list.

    Duplicate pairs and both orientations collapse to a single undirected
    edge. Raises ValueError on out-of-range indices or self-edges.
    """
    if n < 0:
        raise ValueError("node count must be nonnegative")
    pairs = np.asarray(list(edge_list), dtype=np.int64)
    if pairs.size == 0:
        pairs = pairs.reshape(0, 2)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("edge list must contain (i, j) pairs")
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        bad = pairs[(pairs < 0).any(axis=1) | (pairs >= n).any(axis=1)][0]
        raise ValueError(f"edge {tuple(bad)} references a node outside [0, {n})")
    if pairs.size and (pairs[:, 0] == pairs[:, 1]).any():
        i = int(pairs[pairs[:, 0] == pairs[:, 1]][0, 0])
        raise ValueError(f"self-edge ({i}, {i}) is not allowed")

    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if pairs.size else pairs
    return _from_canonical_edges(n, edges)


def _from_canonical_edges(n: int, edges: np.ndarray, self_loops: bool = False) -> Graph:
    """CSR construction from deduplicated (i < j) edges."""
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    if self_loops:
        src = np.concatenate([src, np.arange(n, dtype=np.int64)])
        dst = np.concatenate([dst, np.arange(n, dtype=np.int64)])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    return Graph(n=n, edges=edges, csr_offsets=offsets, csr_targets=dst,
                 self_loops=self_loops)


def neighbors(g: Graph, i: int) -> np.ndarray:
    """Sorted neighbor indices of node ``i`` (copy)."""
    g._check_index(i)
    return g.csr_targets[g.csr_offsets[i]:g.csr_offsets[i + 1]].copy()


def add_self_loops(g: Graph) -> Graph:
    """View of ``g`` in which every neighborhood contains its own node.

    Idempotent; isolated nodes end up with N(i) = {i}. The ``edges``
    array is unchanged (loops live only in the CSR view).
    """
    if g.self_loops:
        return g
    return _from_canonical_edges(g.n, g.edges, self_loops=True)
