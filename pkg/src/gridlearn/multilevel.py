"""Solver-free multilevel learning: coarsening hierarchy and bottom-up refinement."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import CoarseningStallError, GridLearnError, HierarchyError, add_context
from .graph import WeightedGraph, build_laplacian, edge_differences
from .initgraph import CandidatePool, extract_mst, max_spanning_tree_edges
from .kernels import LaplacianSolver, SmootherConfig, smooth_embedding
from .measurements import MeasurementSet
from .sgl import LearnReport, SglConfig, densify, rank_candidates, spectral_scale

log = logging.getLogger(__name__)

MAX_CLUSTER = 8


@dataclass(frozen=True, eq=False)
class AggregationMap:
    """Assignment of each fine node to one of ``coarse_count`` clusters."""

    fine_count: int
    coarse_count: int
    assignment: np.ndarray

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.coarse_count)

    def prolongation(self) -> sp.csr_matrix:
        """``H^+``: fine x coarse indicator matrix."""
        n = self.fine_count
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.assignment)), shape=(n, self.coarse_count))

    def restriction(self) -> sp.csr_matrix:
        """``H``: coarse x fine averaging matrix, ``1/|S_i|`` on cluster members."""
        size = self.sizes()
        n = self.fine_count
        return sp.csr_matrix(
            (1.0 / size[self.assignment], (self.assignment, np.arange(n))), shape=(self.coarse_count, n)
        )

    def average(self, X: np.ndarray) -> np.ndarray:
        """``H X``: per-cluster mean of the rows of ``X``, summed in ascending node order."""
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((self.coarse_count,) + X.shape[1:])
        np.add.at(out, self.assignment, X)
        return out / self.sizes().reshape((-1,) + (1,) * (X.ndim - 1))

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(self.sizes())[:-1]
        return np.split(order, bounds)


@dataclass(frozen=True, eq=False)
class Level:
    graph: WeightedGraph
    X: np.ndarray
    amap: AggregationMap | None = None


@dataclass(frozen=True, eq=False)
class CoarseningHierarchy:
    levels: list[Level]

    @property
    def depth(self) -> int:
        """Index of the coarsest level."""
        return len(self.levels) - 1

    def sizes(self) -> list[int]:
        return [lv.graph.node_count for lv in self.levels]

    def fine_assignment(self, level: int) -> np.ndarray:
        """Level-``level`` node of every level-0 node."""
        a = np.arange(self.levels[0].graph.node_count)
        for lv in self.levels[1:level + 1]:
            a = lv.amap.assignment[a]
        return a


@dataclass(frozen=True)
class SfSglConfig:
    coarsest_size: int = 500
    ratio_target: float = 2.0
    beta_sample: float = 1e-3
    refine_passes: int = 3
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    sgl: SglConfig = field(default_factory=SglConfig)

    def __post_init__(self):
        if self.coarsest_size < 10:
            raise ValueError("coarsest_size must be >= 10")
        if not 1 < self.ratio_target <= 8:
            raise ValueError("ratio_target must lie in (1, 8]")
        if not 0 < self.beta_sample <= 1:
            raise ValueError("beta_sample must lie in (0, 1]")
        if self.refine_passes < 1:
            raise ValueError("refine_passes must be >= 1")


def _match(indptr, indices, weights, B, assignment=None, cap=MAX_CLUSTER):
    """Greedy embedding-aware heavy-edge matching.

    Nodes are visited in ascending order; an unassigned node pairs with the
    unassigned neighbour of largest affinity ``w / ||B_s - B_t||^2``. A node
    whose neighbours are all taken joins its best neighbour's cluster while
    that cluster has fewer than ``cap`` members, else stays alone.
    """
    n = B.shape[0]
    label = np.full(n, -1, dtype=np.int64)
    size: list[int] = []
    for i in range(n):
        if label[i] >= 0:
            continue
        nb = indices[indptr[i]:indptr[i + 1]]
        if nb.size == 0:
            label[i] = len(size)
            size.append(1)
            continue
        d = B[nb] - B[i]
        dist = np.einsum("ij,ij->i", d, d)
        with np.errstate(divide="ignore"):
            aff = np.where(dist > 0, weights[indptr[i]:indptr[i + 1]] / np.where(dist > 0, dist, 1.0), np.inf)
        order = np.lexsort((nb, -aff))
        free = order[label[nb[order]] < 0]
        if free.size:
            j = nb[free[0]]
            label[i] = label[j] = len(size)
            size.append(2)
            continue
        for k in order:
            c = label[nb[k]]
            if size[c] < cap:
                label[i] = c
                size[c] += 1
                break
        else:
            label[i] = len(size)
            size.append(1)
    return label, len(size)


def aggregate_graph(g: WeightedGraph, amap: AggregationMap) -> WeightedGraph:
    """Coarse graph whose Laplacian is ``(H^+)^T L H^+`` (inter-cluster weights summed)."""
    a = amap.assignment
    cs, ct = a[g.s], a[g.t]
    cross = cs != ct
    return WeightedGraph.from_arrays(amap.coarse_count, cs[cross], ct[cross], g.w[cross], merge="sum")


def coarse_laplacian(L_fine: sp.spmatrix, amap: AggregationMap) -> sp.csr_matrix:
    P = amap.prolongation()
    return (P.T @ L_fine @ P).tocsr()


def coarsen_level(g: WeightedGraph, X, smoother: SmootherConfig | None = None,
                  assignment: np.ndarray | None = None) -> tuple[AggregationMap, WeightedGraph, np.ndarray]:
    """One coarsening step.

    Nodes close in a smoothed random embedding are merged into connected
    aggregates; the coarse graph carries the aggregated Laplacian's pattern,
    coarse features are cluster means, and each coarse edge is reweighted to
    ``1 / ||X_c^T e_{s,t}||^2`` (the aggregated weight is kept where the
    two cluster means coincide). Pass ``assignment`` to skip clustering.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = g.node_count
    if assignment is None:
        B = smooth_embedding(build_laplacian(g), smoother or SmootherConfig())
        adj = g.adjacency()
        assignment, nc = _match(adj.indptr, adj.indices, adj.data, B)
    else:
        assignment = np.asarray(assignment, dtype=np.int64)
        nc = int(assignment.max()) + 1
    amap = AggregationMap(n, nc, assignment)
    _check_aggregates(g, amap)
    agg = aggregate_graph(g, amap)
    Xc = amap.average(X)
    z = edge_differences(Xc, agg.s, agg.t)
    w = np.where(z > 0, 1.0 / np.where(z > 0, z, 1.0), agg.w)
    return amap, agg.with_weights(w), Xc


def _check_aggregates(g: WeightedGraph, amap: AggregationMap) -> None:
    if np.any(amap.sizes() == 0):
        raise HierarchyError("empty aggregate", where="multilevel.coarsen_level")
    a = amap.assignment
    inner = a[g.s] == a[g.t]
    forest = WeightedGraph.from_arrays(g.node_count, g.s[inner], g.t[inner], g.w[inner])
    ncomp, _ = forest.component_labels()
    if ncomp != amap.coarse_count:
        raise HierarchyError("an aggregate is not connected", where="multilevel.coarsen_level")


def build_hierarchy(g0: WeightedGraph, X0, cfg: SfSglConfig | None = None) -> CoarseningHierarchy:
    """Coarsen until at most ``cfg.coarsest_size`` nodes remain or reduction stalls."""
    cfg = cfg or SfSglConfig()
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim == 1:
        X0 = X0[:, None]
    if not g0.is_connected():
        raise HierarchyError("level-0 graph is disconnected", where="multilevel.build_hierarchy")
    levels = [Level(g0, X0)]
    while levels[-1].graph.node_count > cfg.coarsest_size:
        g, X = levels[-1].graph, levels[-1].X
        smoother = replace(cfg.smoother, seed=cfg.smoother.seed + len(levels))
        amap, gc, Xc = coarsen_level(g, X, smoother)
        merged = False
        # repeat matching on the aggregate until the target reduction is met
        while g.node_count / amap.coarse_count < cfg.ratio_target / 1.25 and amap.coarse_count > cfg.coarsest_size:
            sub, gc2, Xc2 = coarsen_level(gc, Xc, smoother)
            if gc.node_count / sub.coarse_count < 1.05:
                break
            amap = AggregationMap(g.node_count, sub.coarse_count, sub.assignment[amap.assignment])
            gc, Xc = gc2, Xc2
            merged = True
        if merged:
            # means of means are not cluster means when sizes differ; rebuild from the composite map
            amap, gc, Xc = coarsen_level(g, X, assignment=amap.assignment)
        ratio = g.node_count / amap.coarse_count
        if ratio < 1.05:
            if len(levels) == 1:
                raise CoarseningStallError(
                    f"coarsening reduced {g.node_count} nodes only to {amap.coarse_count}; "
                    "try a larger ratio target",
                    where="multilevel.build_hierarchy",
                )
            log.warning("coarsening stalled at %d nodes", g.node_count)
            break
        levels.append(Level(gc, Xc, amap))
    return CoarseningHierarchy(levels)


def map_to_finer(p_coarse: WeightedGraph, level: int, hier: CoarseningHierarchy) -> WeightedGraph:
    """Lift a learned graph at ``level`` to ``level - 1``.

    Inner-cluster edges: the maximum spanning tree of every aggregate's
    induced subgraph. Inter-cluster edges: for each learned coarse edge, the
    heaviest fine edge joining the two aggregates.
    """
    where = "multilevel.map_to_finer"
    if level < 1:
        raise ValueError("level must be >= 1")
    fine = hier.levels[level - 1].graph
    amap = hier.levels[level].amap
    if p_coarse.node_count != amap.coarse_count:
        raise HierarchyError(
            f"learned graph has {p_coarse.node_count} nodes, level {level} has {amap.coarse_count}", where=where
        )
    a = amap.assignment
    ca, cb = a[fine.s], a[fine.t]
    inner = np.flatnonzero(ca == cb)
    sub = WeightedGraph.from_arrays(fine.node_count, fine.s[inner], fine.t[inner], fine.w[inner])
    inner_pick = inner[max_spanning_tree_edges(sub)]

    cross = np.flatnonzero(ca != cb)
    lo, hi = np.minimum(ca[cross], cb[cross]), np.maximum(ca[cross], cb[cross])
    nc = amap.coarse_count
    # per cluster pair: heaviest edge, ties by (s, t) ascending
    order = np.lexsort((fine.t[cross], fine.s[cross], -fine.w[cross], hi, lo))
    keys = (lo * nc + hi)[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = keys[1:] != keys[:-1]
    best_keys, best_edges = keys[first], cross[order[first]]
    want = p_coarse.edge_keys()
    pos = np.searchsorted(best_keys, want)
    ok = (pos < best_keys.size) & (best_keys[np.minimum(pos, best_keys.size - 1)] == want)
    if not np.all(ok):
        k = int(np.flatnonzero(~ok)[0])
        raise HierarchyError(
            f"coarse edge ({p_coarse.s[k]}, {p_coarse.t[k]}) has no fine crossing edge", where=where
        )
    pick = np.concatenate([inner_pick, best_edges[pos]])
    return WeightedGraph.from_arrays(fine.node_count, fine.s[pick], fine.t[pick], fine.w[pick])


def _candidates(p: WeightedGraph, g: WeightedGraph) -> np.ndarray:
    """Indices of edges of ``g`` absent from ``p``."""
    return np.flatnonzero(~np.isin(g.edge_keys(), p.edge_keys(), assume_unique=True))


def refine_level(p: WeightedGraph, level: int, hier: CoarseningHierarchy, cfg: SfSglConfig | None = None,
                 stats: dict | None = None) -> WeightedGraph:
    """Add off-subgraph edges of ``G_level`` whose smoothed-embedding distortion is large.

    Distortion is ``||B^T e||^2 / ||X^T e||^2`` with ``B`` a smoothed
    embedding of the current graph. Each pass adds up to
    ``ceil(n * beta)`` candidates whose distortion exceeds the candidate
    median, best first.
    """
    cfg = cfg or SfSglConfig()
    g, X = hier.levels[level].graph, hier.levels[level].X
    n = g.node_count
    batch = math.ceil(n * cfg.beta_sample)
    added = 0
    for k in range(cfg.refine_passes):
        cand = _candidates(p, g)
        if cand.size == 0:
            break
        cs, ct = g.s[cand], g.t[cand]
        smoother = replace(cfg.smoother, seed=cfg.smoother.seed + 1000 * (level + 1) + k)
        B = smooth_embedding(build_laplacian(p), smoother)
        zdata = edge_differences(X, cs, ct)
        eta = edge_differences(B, cs, ct) / zdata
        order = rank_candidates(eta, cs, ct)[:batch]
        order = order[eta[order] > np.median(eta)]
        if order.size == 0:
            break
        p = p.add_edges(cs[order], ct[order], 1.0 / zdata[order])
        added += int(order.size)
    if stats is not None:
        stats["refined_edges"] = added
    return p


def sf_sgl_learn(ms: MeasurementSet, pool: CandidatePool, cfg: SfSglConfig | None = None,
                 hierarchy: CoarseningHierarchy | None = None) -> tuple[WeightedGraph, LearnReport]:
    """Multilevel learning: SGL on the coarsest graph, then map down and refine level by level."""
    cfg = cfg or SfSglConfig()
    hier = hierarchy or build_hierarchy(pool.knn_graph, ms.X, cfg)
    top = hier.depth
    coarsest = hier.levels[top]
    report = LearnReport()
    coarse_pool = pool if top == 0 else extract_mst(coarsest.graph)
    try:
        p, report = densify(coarsest.X, coarse_pool, cfg.sgl, report)
    except GridLearnError as exc:
        raise add_context(exc, f"level {top}")
    report.levels.append({"level": top, "nodes": coarsest.graph.node_count, "edges": p.edge_count,
                          "added": report.edges_added})
    for level in range(top, 0, -1):
        try:
            p = map_to_finer(p, level, hier)
            stats: dict = {}
            p = refine_level(p, level - 1, hier, cfg, stats)
        except GridLearnError as exc:
            raise add_context(exc, f"level {level - 1}")
        report.edges_added += stats["refined_edges"]
        report.levels.append({"level": level - 1, "nodes": p.node_count, "edges": p.edge_count,
                              "added": stats["refined_edges"]})
    if ms.Y is not None:
        p, report.alpha_prime = spectral_scale(p, ms)
    return p, report


@dataclass
class CoarseningQuality:
    ratios: np.ndarray
    gamma1: float
    gamma2: float
    tau: float
    epsilon: float
    violations: list[int]
    galerkin_ratios: np.ndarray


def coarsening_quality(fine: WeightedGraph, coarse: WeightedGraph, amap: AggregationMap, K: int,
                       epsilon: float = 0.0) -> CoarseningQuality:
    """Compare the first ``K`` nonzero eigenvalues of a fine/coarse pair.

    ``gamma1``/``gamma2`` are the extreme eigenvalues of ``(H H^T)^{-1}``,
    i.e. the smallest and largest aggregate sizes. Indices whose ratio falls
    outside ``[gamma1, gamma2 (1+eps)^2 / (1 - tau eps^2)]`` are flagged.

    ``galerkin_ratios`` use the coarse problem with the aggregate-size mass
    matrix, ``L_c v = lambda diag(|S|) v``; these are >= 1 by interlacing and
    stay near 1 for a good coarsening.
    """
    if K > min(fine.node_count, coarse.node_count) - 1:
        raise ValueError("K exceeds the smaller graph's nonzero spectrum")
    lf = sla.eigh(build_laplacian(fine).matrix.toarray(), eigvals_only=True, subset_by_index=[1, K])
    lc = sla.eigh(build_laplacian(coarse).matrix.toarray(), eigvals_only=True, subset_by_index=[1, K])
    HHt = (amap.restriction() @ amap.restriction().T).diagonal()
    inv = 1.0 / HHt
    lg = sla.eigh(build_laplacian(coarse).matrix.toarray(), np.diag(inv), eigvals_only=True, subset_by_index=[1, K])
    g1, g2 = float(inv.min()), float(inv.max())
    tau = float(lf[-1] / lf[0])
    ratios = lc / lf
    denom = 1.0 - tau * epsilon**2
    upper = g2 * (1 + epsilon) ** 2 / denom if denom > 0 else np.inf
    tol = 1e-9
    bad = [i for i, r in enumerate(ratios) if r < g1 * (1 - tol) or r > upper * (1 + tol)]
    return CoarseningQuality(ratios, g1, g2, tau, epsilon, bad, lg / lf)


def estimate_fine_spectrum(p: WeightedGraph, level: int, hier: CoarseningHierarchy, ms: MeasurementSet,
                           K: int) -> np.ndarray:
    """First ``K`` nonzero eigenvalues of the level-0 network as seen from a learned graph at ``level``.

    Solves ``L_p v = lambda D v`` with ``D`` the number of level-0 nodes per
    coarse node, after scaling ``p`` so that aggregated currents ``P^T y``
    dissipate as much power as in the measurements.
    """
    if ms.Y is None:
        raise ValueError("spectrum estimate needs current measurements")
    a = hier.fine_assignment(level)
    counts = np.bincount(a, minlength=p.node_count).astype(np.float64)
    Yc = np.zeros((p.node_count, ms.M))
    np.add.at(Yc, a, ms.Y)
    Xt = LaplacianSolver(build_laplacian(p)).solve(Yc)
    alpha = np.mean(np.einsum("ij,ij->j", Yc, Xt) / np.einsum("ij,ij->j", ms.Y, ms.X))
    lam = sla.eigh(build_laplacian(p).matrix.toarray(), np.diag(counts), eigvals_only=True, subset_by_index=[1, K])
    return alpha * lam
