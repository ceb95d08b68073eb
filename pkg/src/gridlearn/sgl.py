"""Single-level spectral graph learning by iterative densification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePairError, GridLearnError, InvalidMeasurementError, add_context
from .graph import WeightedGraph, build_laplacian, edge_differences
from .initgraph import CandidatePool
from .kernels import EigenConfig, LaplacianSolver, SolverConfig, eigen_pairs
from .measurements import MeasurementSet

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    coords: np.ndarray
    kind: str = "eigensubspace"  # or "smoothed"
    scaled: bool = True

    def distances(self, s, t) -> np.ndarray:
        """``||coords^T e_{s,t}||^2`` per pair."""
        return edge_differences(self.coords, s, t)


@dataclass(frozen=True)
class SglConfig:
    r: int = 5
    tol: float = 1e-12
    beta_sample: float = 1e-3
    max_iterations: int = 500
    sigma_sq: float = math.inf
    weight_factor: float | None = None
    dense_cutoff: int = 300

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.beta_sample <= 1:
            raise ValueError("beta_sample must lie in (0, 1]")
        if self.r < 1 or self.max_iterations < 1:
            raise ValueError("r and max_iterations must be >= 1")


@dataclass
class LearnReport:
    iterations: int = 0
    s_max_trace: list[float] = field(default_factory=list)
    edges_added: int = 0
    alpha_prime: float = 1.0
    converged: bool = False
    levels: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "s_max_trace": [float(v) for v in self.s_max_trace],
            "edges_added": self.edges_added,
            "alpha_prime": float(self.alpha_prime),
            "converged": self.converged,
            "levels": self.levels,
        }


def eigen_embedding(g: WeightedGraph, r: int = 5, sigma_sq: float = math.inf,
                    eig: EigenConfig | None = None) -> EmbeddingMatrix:
    """Columns ``u_i / sqrt(lambda_i + 1/sigma^2)`` for the ``r`` smallest nonzero eigenpairs."""
    base = eig or EigenConfig()
    lam, U = eigen_pairs(build_laplacian(g), EigenConfig(r, base.method, base.dense_cutoff, base.tolerance))
    inv = 0.0 if math.isinf(sigma_sq) else 1.0 / sigma_sq
    return EmbeddingMatrix(U / np.sqrt(lam + inv), "eigensubspace", True)


def edge_sensitivities(emb: EmbeddingMatrix, X, s, t) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return emb.distances(s, t) - edge_differences(X, s, t) / X.shape[1]


def edge_sensitivity(emb: EmbeddingMatrix, X, s: int, t: int) -> float:
    """Objective gradient w.r.t. a candidate edge weight: ``z_emb - z_data / M``."""
    if s == t:
        raise ValueError("edge sensitivity needs distinct endpoints")
    return float(edge_sensitivities(emb, X, [s], [t])[0])


def edge_distortions(emb: EmbeddingMatrix, X, s, t, M: float | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    M = X.shape[1] if M is None else M
    zdata = edge_differences(X, s, t)
    if np.any(zdata == 0):
        k = int(np.flatnonzero(zdata == 0)[0])
        raise DegeneratePairError(
            f"zero data distance between {np.asarray(s)[k]} and {np.asarray(t)[k]}", where="sgl.edge_distortion"
        )
    return M * emb.distances(s, t) / zdata


def edge_distortion(emb: EmbeddingMatrix, X, s: int, t: int, M: float | None = None) -> float:
    """``M * z_emb / z_data``; exceeds one exactly when the sensitivity is positive."""
    return float(edge_distortions(emb, X, [s], [t], M)[0])


def rank_candidates(score: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Candidate order by descending score, ties by ``(s, t)`` ascending."""
    return np.lexsort((t, s, -score))


def densify(X: np.ndarray, pool: CandidatePool, cfg: SglConfig, report: LearnReport | None = None) -> tuple[WeightedGraph, LearnReport]:
    """Grow the pool's spanning tree by spectrally critical off-tree edges (no final scaling)."""
    report = report or LearnReport()
    X = np.asarray(X, dtype=np.float64)
    M = X.shape[1]
    knn = pool.knn_graph
    n = knn.node_count
    factor = M if cfg.weight_factor is None else cfg.weight_factor
    tree = pool.tree_edges
    g = WeightedGraph.from_arrays(n, knn.s[tree], knn.t[tree], factor / edge_differences(X, knn.s[tree], knn.t[tree]))
    cand = pool.offtree_edges
    cs, ct = knn.s[cand], knn.t[cand]
    zdata = edge_differences(X, cs, ct)
    batch = math.ceil(n * cfg.beta_sample)
    remaining = np.ones(cand.size, dtype=bool)
    report.converged = False
    while True:
        idx = np.flatnonzero(remaining)
        if idx.size == 0:
            report.converged = True
            break
        if report.iterations >= cfg.max_iterations:
            log.warning("SGL stopped at the iteration cap (%d) before convergence", cfg.max_iterations)
            break
        try:
            emb = eigen_embedding(g, cfg.r, cfg.sigma_sq, EigenConfig(dense_cutoff=cfg.dense_cutoff))
        except GridLearnError as exc:
            raise add_context(exc, f"iteration {report.iterations}")
        sens = emb.distances(cs[idx], ct[idx]) - zdata[idx] / M
        s_max = float(sens.max())
        report.iterations += 1
        report.s_max_trace.append(s_max)
        if s_max < cfg.tol:
            report.converged = True
            break
        order = rank_candidates(sens, cs[idx], ct[idx])[:batch]
        order = order[sens[order] > cfg.tol]
        pick = idx[order]
        g = g.add_edges(cs[pick], ct[pick], factor / zdata[pick])
        remaining[pick] = False
        report.edges_added += int(pick.size)
    return g, report


def spectral_scale(g_learned: WeightedGraph, ms: MeasurementSet, solver: SolverConfig | None = None) -> tuple[WeightedGraph, float]:
    """Scale all weights so the learned network's mean power dissipation matches the measurements.

    ``alpha' = mean_i (y_i^T xt_i) / (y_i^T x_i)`` where ``xt_i`` solves the
    learned Laplacian for current ``y_i``.
    """
    where = "sgl.spectral_scale"
    if ms.Y is None:
        raise InvalidMeasurementError("edge scaling needs current measurements", where=where)
    Y = ms.Y
    measured = np.einsum("ij,ij->j", Y, ms.X)
    if np.any(measured <= 0):
        k = int(np.flatnonzero(measured <= 0)[0])
        raise InvalidMeasurementError(f"column {k} has non-positive dissipation {measured[k]:.3e}", where=where)
    Xt = LaplacianSolver(build_laplacian(g_learned), solver).solve(Y)
    learned = np.einsum("ij,ij->j", Y, Xt)
    alpha = float(np.mean(learned / measured))
    return g_learned.scaled(alpha), alpha


def sgl_learn(ms: MeasurementSet, pool: CandidatePool, cfg: SglConfig | None = None,
              solver: SolverConfig | None = None) -> tuple[WeightedGraph, LearnReport]:
    """Iterative spectral densification followed by global edge scaling.

    Voltage-only measurement sets (no currents) skip the scaling step and
    report ``alpha_prime = 1``.
    """
    cfg = cfg or SglConfig()
    g, report = densify(ms.X, pool, cfg)
    if ms.Y is not None:
        g, report.alpha_prime = spectral_scale(g, ms, solver)
    else:
        log.info("no current measurements; skipping edge scaling")
    return g, report
