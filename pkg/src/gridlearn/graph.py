"""Undirected weighted graphs, Laplacians and smoothness functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConnectivityError, DimensionError, InfiniteResistanceError, MalformedGraphError


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph with positive edge weights (conductances).

    Edges are stored canonically: ``s < t``, sorted lexicographically by
    ``(s, t)``, one edge per unordered pair. Use :meth:`from_edges` or
    :meth:`from_arrays` rather than the raw constructor.
    """

    node_count: int
    s: np.ndarray
    t: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for arr in (self.s, self.t, self.w):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, n: int, s, t, w, merge: str = "error") -> "WeightedGraph":
        """Build a graph from parallel endpoint/weight arrays.

        ``merge`` controls duplicate unordered pairs: ``"error"`` raises,
        ``"max"`` keeps the heaviest, ``"sum"`` adds weights.
        """
        where = "graph.from_arrays"
        n = int(n)
        if n < 1:
            raise MalformedGraphError(f"node_count must be positive, got {n}", where=where)
        s = np.asarray(s, dtype=np.int64).ravel()
        t = np.asarray(t, dtype=np.int64).ravel()
        w = np.asarray(w, dtype=np.float64).ravel()
        if not (s.shape == t.shape == w.shape):
            raise MalformedGraphError("endpoint and weight arrays differ in length", where=where)
        if s.size:
            if s.min() < 0 or t.min() < 0 or s.max() >= n or t.max() >= n:
                raise MalformedGraphError("edge endpoint out of range", where=where)
            loops = np.flatnonzero(s == t)
            if loops.size:
                raise MalformedGraphError(f"self-loop at node {int(s[loops[0]])}", where=where)
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise MalformedGraphError("edge weights must be finite and strictly positive", where=where)
        lo = np.minimum(s, t)
        hi = np.maximum(s, t)
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if lo.size > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if dup.any():
                if merge == "error":
                    k = int(np.flatnonzero(dup)[0])
                    raise MalformedGraphError(
                        f"duplicate edge ({int(lo[k])}, {int(hi[k])})", where=where
                    )
                keys = lo * n + hi
                uniq, start = np.unique(keys, return_index=True)
                if merge == "sum":
                    w = np.add.reduceat(w, start)
                elif merge == "max":
                    w = np.maximum.reduceat(w, start)
                else:
                    raise ValueError(f"unknown merge policy {merge!r}")
                lo, hi = lo[start], hi[start]
        return cls(n, lo.copy(), hi.copy(), w.copy())

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]], merge: str = "error") -> "WeightedGraph":
        edges = list(edges)
        if not edges:
            return cls.from_arrays(n, [], [], [], merge=merge)
        s, t, w = zip(*edges)
        return cls.from_arrays(n, s, t, w, merge=merge)

    @property
    def edge_count(self) -> int:
        return int(self.s.size)

    @property
    def edges(self) -> Iterator[tuple[int, int, float]]:
        for a, b, c in zip(self.s.tolist(), self.t.tolist(), self.w.tolist()):
            yield a, b, c

    def edge_keys(self) -> np.ndarray:
        """Integer key ``s * N + t`` per edge, sorted ascending."""
        return self.s * self.node_count + self.t

    def with_weights(self, w) -> "WeightedGraph":
        w = np.asarray(w, dtype=np.float64)
        if w.shape != self.w.shape:
            raise DimensionError("weight vector length differs from edge count", where="graph.with_weights")
        return WeightedGraph.from_arrays(self.node_count, self.s, self.t, w)

    def scaled(self, c: float) -> "WeightedGraph":
        return self.with_weights(self.w * c)

    def add_edges(self, s, t, w) -> "WeightedGraph":
        return WeightedGraph.from_arrays(
            self.node_count,
            np.concatenate([self.s, np.asarray(s, dtype=np.int64)]),
            np.concatenate([self.t, np.asarray(t, dtype=np.int64)]),
            np.concatenate([self.w, np.asarray(w, dtype=np.float64)]),
        )

    def adjacency(self) -> sp.csr_matrix:
        n = self.node_count
        a = sp.coo_matrix(
            (np.concatenate([self.w, self.w]), (np.concatenate([self.s, self.t]), np.concatenate([self.t, self.s]))),
            shape=(n, n),
        )
        return a.tocsr()

    def component_labels(self) -> tuple[int, np.ndarray]:
        return connected_components(self.adjacency(), directed=False)

    def is_connected(self) -> bool:
        return self.component_labels()[0] == 1

    def permuted(self, perm) -> "WeightedGraph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return WeightedGraph.from_arrays(self.node_count, perm[self.s], perm[self.t], self.w)

    def subgraph(self, nodes) -> tuple["WeightedGraph", np.ndarray]:
        """Induced subgraph on ``nodes`` (relabelled 0..k-1 in the given order) and its edge indices."""
        nodes = np.asarray(nodes, dtype=np.int64)
        local = np.full(self.node_count, -1, dtype=np.int64)
        local[nodes] = np.arange(nodes.size)
        keep = np.flatnonzero((local[self.s] >= 0) & (local[self.t] >= 0))
        g = WeightedGraph.from_arrays(nodes.size, local[self.s[keep]], local[self.t[keep]], self.w[keep])
        return g, keep


@dataclass(frozen=True, eq=False)
class LaplacianView:
    """Sparse ``L = D - W`` of a :class:`WeightedGraph` (CSR, symmetric)."""

    graph: WeightedGraph
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return self.graph.node_count

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


@dataclass(frozen=True)
class PrecisionParams:
    """Prior feature variance and the eigenvalue count used by the objective."""

    sigma_sq: float = math.inf
    eig_budget: int = 50

    def __post_init__(self):
        if not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")
        if self.eig_budget < 1:
            raise ValueError("eig_budget must be >= 1")

    @property
    def inv_sigma_sq(self) -> float:
        return 0.0 if math.isinf(self.sigma_sq) else 1.0 / self.sigma_sq


def build_laplacian(g: WeightedGraph) -> LaplacianView:
    n = g.node_count
    if g.edge_count > 1:
        keys = g.edge_keys()
        if np.any(keys[1:] == keys[:-1]):
            raise MalformedGraphError("duplicate edge", where="graph.build_laplacian")
    if np.any(g.s == g.t):
        raise MalformedGraphError("self-loop", where="graph.build_laplacian")
    deg = np.bincount(g.s, weights=g.w, minlength=n) + np.bincount(g.t, weights=g.w, minlength=n)
    rows = np.concatenate([g.s, g.t, np.arange(n)])
    cols = np.concatenate([g.t, g.s, np.arange(n)])
    vals = np.concatenate([-g.w, -g.w, deg])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sort_indices()
    return LaplacianView(g, mat)


def edge_differences(X: np.ndarray, s, t) -> np.ndarray:
    """Squared row distances ``||X^T e_{s,t}||^2`` for each pair."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    d = X[np.asarray(s)] - X[np.asarray(t)]
    return np.einsum("ij,ij->i", d, d)


def quadratic_form(L: LaplacianView, x) -> float:
    """``x^T L x`` summed edge by edge."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != L.n:
        raise DimensionError(f"expected vector of length {L.n}, got shape {x.shape}", where="graph.quadratic_form")
    g = L.graph
    d = x[g.s] - x[g.t]
    return float(np.sum(g.w * d * d))


def smoothness_trace(L: LaplacianView, X) -> float:
    """``Tr(X^T L X)``: total smoothness of the columns of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != L.n:
        raise DimensionError(f"expected {L.n} rows, got shape {X.shape}", where="graph.smoothness_trace")
    g = L.graph
    return float(np.sum(g.w * edge_differences(X, g.s, g.t)))


def density(g: WeightedGraph) -> float:
    return g.edge_count / g.node_count


def _require_connected(g: WeightedGraph, where: str) -> None:
    ncomp, _ = g.component_labels()
    if ncomp != 1:
        raise ConnectivityError(f"graph has {ncomp} connected components", where=where)


def objective_value(g: WeightedGraph, X, params: PrecisionParams | None = None) -> float:
    """Penalized log-likelihood of ``X`` under the precision ``L + I/sigma^2``.

    Only the first ``params.eig_budget`` nonzero Laplacian eigenvalues enter
    the log-determinant; the sparsity penalty is omitted.
    """
    from .kernels import EigenConfig, eigen_pairs

    params = params or PrecisionParams(eig_budget=min(50, g.node_count - 1))
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != g.node_count:
        raise DimensionError("X row count differs from node count", where="graph.objective_value")
    _require_connected(g, "graph.objective_value")
    budget = params.eig_budget
    if budget > g.node_count - 1:
        raise ValueError(f"eig_budget {budget} exceeds N-1 = {g.node_count - 1}")
    lam, _ = eigen_pairs(build_laplacian(g), EigenConfig(r=budget))
    inv = params.inv_sigma_sq
    M = X.shape[1]
    data = np.sum(g.w * edge_differences(X, g.s, g.t))
    return float(np.sum(np.log(lam + inv)) - (np.sum(X * X) * inv + data) / M)


def effective_resistances(g: WeightedGraph, pairs) -> np.ndarray:
    """``e_{s,t}^T L^+ e_{s,t}`` for each ``(s, t)`` in ``pairs`` (one factorization)."""
    from .kernels import LaplacianSolver, SolverConfig

    where = "graph.effective_resistance"
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("effective resistance needs distinct endpoints")
    ncomp, labels = g.component_labels()
    if ncomp != 1:
        bad = labels[pairs[:, 0]] != labels[pairs[:, 1]]
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise InfiniteResistanceError(
                f"nodes {int(pairs[k, 0])} and {int(pairs[k, 1])} are disconnected", where=where
            )
        raise ConnectivityError(f"graph has {ncomp} connected components", where=where)
    n = g.node_count
    solver = LaplacianSolver(build_laplacian(g), SolverConfig())
    out = np.empty(len(pairs))
    block = 256
    for lo in range(0, len(pairs), block):
        chunk = pairs[lo:lo + block]
        b = np.zeros((n, len(chunk)))
        cols = np.arange(len(chunk))
        b[chunk[:, 0], cols] = 1.0
        b[chunk[:, 1], cols] = -1.0
        x = solver.solve(b)
        out[lo:lo + len(chunk)] = x[chunk[:, 0], cols] - x[chunk[:, 1], cols]
    return out


def effective_resistance(g: WeightedGraph, s: int, t: int) -> float:
    if s == t:
        raise ValueError("effective resistance needs distinct endpoints")
    return float(effective_resistances(g, [(s, t)])[0])
