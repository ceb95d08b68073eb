"""Spectrum and resistance agreement between a reference and a learned graph."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError
from .graph import PrecisionParams, WeightedGraph, build_laplacian, density, effective_resistances, objective_value
from .kernels import EigenConfig, eigen_pairs


@dataclass
class MetricsReport:
    err_lambda: float
    err_resistance: float
    density_original: float
    density_learned: float
    eig_count: int
    pair_count: int
    objective_original: float | None = None
    objective_learned: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def mean_relative_error(approx, exact) -> float:
    """``mean |approx - exact| / |exact|``."""
    approx, exact = np.asarray(approx, dtype=np.float64), np.asarray(exact, dtype=np.float64)
    return float(np.mean(np.abs(approx - exact) / np.abs(exact)))


def sample_pairs(n: int, count: int, seed: int = 0) -> np.ndarray:
    """``count`` uniformly drawn pairs of distinct nodes (pairs may repeat)."""
    if n < 2:
        raise ValueError("need at least two nodes to sample pairs")
    rng = np.random.default_rng(seed)
    s = rng.integers(0, n, size=count)
    t = (s + rng.integers(1, n, size=count)) % n
    return np.column_stack([s, t])


def compute_metrics(g_true: WeightedGraph, g_learned: WeightedGraph, eig_count: int = 50, pair_count: int = 100,
                    seed: int = 0, X=None, eig: EigenConfig | None = None) -> MetricsReport:
    """Err(lambda) over the first ``eig_count`` nonzero eigenvalues and Err(R) over random pairs.

    ``eig_count`` is clipped to ``N - 1``. Objective values are filled in
    when the voltage matrix ``X`` is given.
    """
    n = g_true.node_count
    if g_learned.node_count != n:
        raise DimensionError(
            f"reference graph has {n} nodes but learned graph has {g_learned.node_count}",
            where="metrics.compute_metrics",
        )
    k = min(eig_count, n - 1)
    base = eig or EigenConfig()
    cfg = EigenConfig(k, base.method, base.dense_cutoff, base.tolerance)
    lam_true, _ = eigen_pairs(build_laplacian(g_true), cfg)
    lam_learned, _ = eigen_pairs(build_laplacian(g_learned), cfg)
    pairs = sample_pairs(n, pair_count, seed)
    r_true = effective_resistances(g_true, pairs)
    r_learned = effective_resistances(g_learned, pairs)
    report = MetricsReport(
        err_lambda=mean_relative_error(lam_learned, lam_true),
        err_resistance=mean_relative_error(r_learned, r_true),
        density_original=density(g_true),
        density_learned=density(g_learned),
        eig_count=k,
        pair_count=pair_count,
    )
    if X is not None:
        params = PrecisionParams(eig_budget=min(50, n - 1))
        report.objective_original = objective_value(g_true, X, params)
        report.objective_learned = objective_value(g_learned, X, params)
    return report
