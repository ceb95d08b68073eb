"""Candidate-edge universe: exact kNN graph plus its maximum spanning tree."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConnectivityError, ConnectivityWarning, WeightOverflowError
from .graph import WeightedGraph, edge_differences

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    block_rows: int = 512

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True, eq=False)
class CandidatePool:
    """kNN graph split into spanning-tree and off-tree edge indices."""

    knn_graph: WeightedGraph
    tree_edges: np.ndarray
    offtree_edges: np.ndarray

    def tree(self) -> WeightedGraph:
        g = self.knn_graph
        idx = self.tree_edges
        return WeightedGraph.from_arrays(g.node_count, g.s[idx], g.t[idx], g.w[idx])


def _nearest(X: np.ndarray, k: int, block: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and exact squared distances of each row's ``k`` nearest rows."""
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    shortlist = min(n - 1, k + 8)
    nbr = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (X[lo:hi] @ X.T)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        cand = np.argpartition(d2, shortlist - 1, axis=1)[:, :shortlist]
        # the Gram expansion loses digits for close rows; rank the shortlist exactly
        diff = X[cand] - X[lo:hi, None, :]
        exact = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.lexsort((cand, exact), axis=1)[:, :k]
        nbr[lo:hi] = np.take_along_axis(cand, order, axis=1)
        dist[lo:hi] = np.take_along_axis(exact, order, axis=1)
    return nbr, dist


def _augment(n: int, s: np.ndarray, t: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Join components with shortest inter-component pairs until connected."""
    added = 0
    while True:
        adj = coo_matrix((np.ones(s.size), (s, t)), shape=(n, n))
        ncomp, labels = connected_components(adj, directed=False)
        if ncomp == 1:
            return s, t, added
        inside = np.flatnonzero(labels == labels[0])
        outside = np.flatnonzero(labels != labels[0])
        best = (np.inf, -1, -1)
        step = max(1, 2_000_000 // (outside.size * X.shape[1]))
        for lo in range(0, inside.size, step):
            a = inside[lo:lo + step]
            d = X[a][:, None, :] - X[outside][None, :, :]
            d2 = np.einsum("ijk,ijk->ij", d, d)
            i, j = np.unravel_index(np.argmin(d2), d2.shape)
            if d2[i, j] < best[0]:
                best = (d2[i, j], int(a[i]), int(outside[j]))
        s = np.append(s, min(best[1], best[2]))
        t = np.append(t, max(best[1], best[2]))
        added += 1


def build_knn(X, cfg: KnnConfig | None = None) -> WeightedGraph:
    """Symmetrized exact kNN graph over the rows of ``X``.

    Edge ``(s, t)`` exists when either endpoint is among the other's ``k``
    nearest rows (Euclidean); its weight is ``1 / ||X[s] - X[t]||^2``. A
    disconnected result is joined by shortest inter-component pairs, with a
    :class:`ConnectivityWarning`.
    """
    where = "initgraph.build_knn"
    cfg = cfg or KnnConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < cfg.k + 1:
        raise ValueError(f"kNN with k={cfg.k} needs at least {cfg.k + 1} rows, got {n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    nbr, dist = _nearest(X, cfg.k, cfg.block_rows)
    zero = np.argwhere(dist == 0)
    if zero.size:
        i, j = int(zero[0, 0]), int(nbr[zero[0, 0], zero[0, 1]])
        pair = (min(i, j), max(i, j))
        raise WeightOverflowError(f"rows {pair[0]} and {pair[1]} are identical", pair, where=where)
    src = np.repeat(np.arange(n), cfg.k)
    dst = nbr.ravel()
    s, t = np.minimum(src, dst), np.maximum(src, dst)
    keys = np.unique(s * n + t)
    s, t = keys // n, keys % n
    s, t, added = _augment(n, s, t, X)
    if added:
        msg = f"kNN graph was disconnected; added {added} bridging edge(s)"
        log.warning(msg)
        warnings.warn(msg, ConnectivityWarning, stacklevel=2)
    z = edge_differences(X, s, t)
    if np.any(z == 0):
        k = int(np.flatnonzero(z == 0)[0])
        raise WeightOverflowError(f"rows {s[k]} and {t[k]} are identical", (int(s[k]), int(t[k])), where=where)
    return WeightedGraph.from_arrays(n, s, t, 1.0 / z)


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def max_spanning_tree_edges(g: WeightedGraph) -> np.ndarray:
    """Kruskal on descending weight, ties by ``(s, t)`` ascending; returns edge indices (a spanning forest)."""
    order = np.lexsort((g.t, g.s, -g.w))
    ds = _DisjointSet(g.node_count)
    chosen = []
    s, t = g.s.tolist(), g.t.tolist()
    need = g.node_count - 1
    for e in order.tolist():
        if ds.union(s[e], t[e]):
            chosen.append(e)
            if len(chosen) == need:
                break
    return np.sort(np.asarray(chosen, dtype=np.int64))


def extract_mst(g: WeightedGraph) -> CandidatePool:
    tree = max_spanning_tree_edges(g)
    if tree.size != g.node_count - 1:
        raise ConnectivityError("graph is disconnected; no spanning tree", where="initgraph.extract_mst")
    mask = np.ones(g.edge_count, dtype=bool)
    mask[tree] = False
    return CandidatePool(g, tree, np.flatnonzero(mask))


def build_pool(X, cfg: KnnConfig | None = None) -> CandidatePool:
    return extract_mst(build_knn(X, cfg))
