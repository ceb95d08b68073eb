"""Synthetic voltage/current measurements and their perturbations."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, TooFewNodesError
from .graph import WeightedGraph, build_laplacian
from .kernels import LaplacianSolver, SolverConfig

SOURCES = ("gaussian-protocol", "jl-protocol", "external")


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Paired voltages ``X`` and currents ``Y``, both ``N x M``.

    ``Y`` is ``None`` for voltage-only data (e.g. after node subsampling).
    """

    X: np.ndarray
    Y: np.ndarray | None = None
    noise_level: float = 0.0
    source: str = "external"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=np.float64)
            if Y.ndim == 1:
                Y = Y[:, None]
            if Y.shape != X.shape:
                raise DimensionError(f"X has shape {X.shape} but Y has {Y.shape}", where="measurements.MeasurementSet")
            object.__setattr__(self, "Y", Y)
        if self.source not in SOURCES:
            raise ValueError(f"unknown measurement source {self.source!r}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class JlConfig:
    epsilon: float = 0.3
    m_override: int | None = None
    log: str = "ln"  # "ln", "log2" or "log10"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.log not in ("ln", "log2", "log10"):
            raise ValueError(f"unknown log base {self.log!r}")

    def measurement_count(self, n: int) -> int:
        if self.m_override is not None:
            return int(self.m_override)
        logn = {"ln": math.log, "log2": math.log2, "log10": math.log10}[self.log](n)
        return max(1, math.ceil(24.0 * logn / self.epsilon**2))


def column_rng(seed: int, column: int) -> np.random.Generator:
    """Independent stream for one column, so serial and parallel runs agree."""
    return np.random.default_rng([int(seed), int(column)])


def generate_gaussian(g_true: WeightedGraph, M: int = 50, seed: int = 0, solver: SolverConfig | None = None) -> MeasurementSet:
    """Random-current protocol.

    Each current column is standard normal, mean-centred and normalized to
    unit length; the matching voltage column solves ``L x = y`` with zero
    mean.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = g_true.node_count
    Y = np.empty((n, M))
    for i in range(M):
        y = column_rng(seed, i).standard_normal(n)
        y -= y.mean()
        Y[:, i] = y / np.linalg.norm(y)
    X = LaplacianSolver(build_laplacian(g_true), solver).solve(Y)
    return MeasurementSet(X, Y, 0.0, "gaussian-protocol")


def incidence(g: WeightedGraph):
    """Signed edge-node incidence, +1 at the smaller (head) index."""
    m = g.edge_count
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([g.s, g.t])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, g.node_count))


def generate_jl(g_true: WeightedGraph, cfg: JlConfig | None = None, seed: int = 0, solver: SolverConfig | None = None) -> MeasurementSet:
    """Random-projection protocol: ``Y^T = C W^{1/2} B`` with ``C`` a random sign matrix.

    With ``M`` large enough, ``||X^T e_{s,t}||^2`` approximates the effective
    resistance between ``s`` and ``t`` within a factor ``1 +- epsilon``.
    Current columns are zero-mean but not unit-normalized.
    """
    cfg = cfg or JlConfig()
    n = g_true.node_count
    M = cfg.measurement_count(n)
    B = incidence(g_true)
    sqrt_w = np.sqrt(g_true.w)
    Y = np.empty((n, M))
    for i in range(M):
        c = column_rng(seed, i).choice(np.array([-1.0, 1.0]), size=g_true.edge_count) / math.sqrt(M)
        Y[:, i] = B.T @ (sqrt_w * c)
    X = LaplacianSolver(build_laplacian(g_true), solver).solve(Y)
    return MeasurementSet(X, Y, 0.0, "jl-protocol")


def _content_seed(seed: int, column: np.ndarray) -> list[int]:
    digest = hashlib.blake2b(np.ascontiguousarray(column).tobytes(), digest_size=16).digest()
    return [int(seed)] + [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def add_noise(ms: MeasurementSet, zeta: float, seed: int = 0) -> MeasurementSet:
    """``x <- x + zeta * ||x|| * eps`` per voltage column, ``eps`` a unit Gaussian direction.

    The noise stream of a column is keyed on the seed and the column's
    contents, so permuting columns permutes the result the same way.
    """
    if zeta < 0:
        raise ValueError("noise level must be nonnegative")
    if zeta == 0:
        return replace(ms, noise_level=0.0)
    X = ms.X.copy()
    for i in range(ms.M):
        x = ms.X[:, i]
        eps = np.random.default_rng(_content_seed(seed, x)).standard_normal(ms.N)
        eps /= np.linalg.norm(eps)
        X[:, i] = x + zeta * np.linalg.norm(x) * eps
    return replace(ms, X=X, noise_level=float(zeta))


def subsample_nodes(ms: MeasurementSet, fraction: float, seed: int = 0) -> tuple[MeasurementSet, np.ndarray]:
    """Keep a uniform random ``ceil(fraction * N)`` subset of voltage rows.

    Currents are dropped. Returns the reduced set and the retained node
    indices in increasing order.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    n_keep = math.ceil(fraction * ms.N)
    if n_keep < 3:
        raise TooFewNodesError(f"subsample keeps only {n_keep} nodes", where="measurements.subsample_nodes")
    if n_keep == ms.N:
        idx = np.arange(ms.N)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(ms.N, size=n_keep, replace=False))
    return MeasurementSet(ms.X[idx], None, ms.noise_level, ms.source), idx
