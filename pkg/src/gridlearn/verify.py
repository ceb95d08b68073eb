"""Vectorless worst-case voltage verification on a resistor grid.

The grid is grounded at pad nodes, factored once, and for every query node
the adjoint solve ``G z = e_q`` gives the voltage response to unit current
at each node. The worst case over box and laminar budget constraints is a
fractional knapsack over a polymatroid, solved exactly by greedy filling in
descending ``z``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FloatingIslandError, GridLearnError, SolverDivergenceError, UnsupportedConstraintsError, add_context
from .graph import WeightedGraph, build_laplacian
from .kernels import SolverConfig


@dataclass(frozen=True, eq=False)
class CurrentConstraints:
    """Per-node current bounds plus a laminar family of budgets ``sum_{p in S_k} j_p <= B_k``."""

    upper_bounds: np.ndarray
    budgets: tuple[tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        ub = np.asarray(self.upper_bounds, dtype=np.float64)
        if ub.ndim != 1 or np.any(~np.isfinite(ub)) or np.any(ub < 0):
            raise ValueError("upper bounds must be a finite nonnegative vector")
        budgets = []
        for nodes, bound in self.budgets:
            nodes = np.unique(np.asarray(nodes, dtype=np.int64))
            if nodes.size == 0 or nodes[0] < 0 or nodes[-1] >= ub.size:
                raise ValueError("budget node set empty or out of range")
            if not bound > 0:
                raise ValueError("budget bounds must be positive")
            budgets.append((nodes, float(bound)))
        object.__setattr__(self, "upper_bounds", ub)
        object.__setattr__(self, "budgets", tuple(budgets))

    @property
    def node_count(self) -> int:
        return self.upper_bounds.size

    def check_laminar(self) -> None:
        sets = [set(nodes.tolist()) for nodes, _ in self.budgets]
        for a in range(len(sets)):
            for b in range(a + 1, len(sets)):
                inter = len(sets[a] & sets[b])
                if inter and inter != min(len(sets[a]), len(sets[b])):
                    raise UnsupportedConstraintsError(
                        f"budgets {a} and {b} overlap without nesting", where="verify.worst_case_voltage"
                    )

    def is_feasible(self, j, atol: float = 1e-12) -> bool:
        j = np.asarray(j, dtype=np.float64)
        if np.any(j < -atol) or np.any(j > self.upper_bounds + atol):
            return False
        return all(j[nodes].sum() <= bound * (1 + 1e-12) + atol for nodes, bound in self.budgets)


@dataclass(frozen=True, eq=False)
class VerificationProblem:
    grid: WeightedGraph
    ground_nodes: np.ndarray
    constraints: CurrentConstraints
    query_nodes: np.ndarray

    def __post_init__(self):
        ground = np.unique(np.asarray(self.ground_nodes, dtype=np.int64))
        query = np.asarray(self.query_nodes, dtype=np.int64)
        n = self.grid.node_count
        if ground.size == 0:
            raise ValueError("at least one ground node is required")
        if np.any((ground < 0) | (ground >= n)) or np.any((query < 0) | (query >= n)):
            raise ValueError("ground or query node out of range")
        if np.intersect1d(ground, query).size:
            raise ValueError("query nodes must not be grounded")
        if self.constraints.node_count != n:
            raise ValueError(f"constraints cover {self.constraints.node_count} nodes, grid has {n}")
        object.__setattr__(self, "ground_nodes", ground)
        object.__setattr__(self, "query_nodes", query)


@dataclass
class WorstCaseResult:
    query_nodes: np.ndarray
    values: np.ndarray
    witnesses: np.ndarray  # query x N currents
    factor_time: float = 0.0
    solve_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lp_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def stats(self) -> dict:
        return {
            "queries": int(self.query_nodes.size),
            "factor_time": self.factor_time,
            "solve_time_total": float(self.solve_times.sum()),
            "lp_time_total": float(self.lp_times.sum()),
            "mean_value": float(self.values.mean()) if self.values.size else 0.0,
            "max_value": float(self.values.max()) if self.values.size else 0.0,
        }


class GroundedSystem:
    """Laplacian with ground rows and columns removed (symmetric positive definite)."""

    def __init__(self, matrix: sp.csc_matrix, keep: np.ndarray, node_count: int, cfg: SolverConfig | None = None):
        self.matrix = matrix
        self.keep = keep
        self.node_count = node_count
        self.position = np.full(node_count, -1, dtype=np.int64)
        self.position[keep] = np.arange(keep.size)
        self.cfg = cfg or SolverConfig()
        self._lu = None
        self.factor_time = 0.0

    def factor(self) -> None:
        if self._lu is None and self.cfg.method == "direct":
            t0 = time.perf_counter()
            self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A")
            self.factor_time = time.perf_counter() - t0

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.cfg.method == "direct":
            self.factor()
            return self._lu.solve(b)
        d = self.matrix.diagonal()
        pre = spla.LinearOperator(self.matrix.shape, matvec=lambda v: v / d)
        x, info = spla.cg(self.matrix, b, rtol=self.cfg.tolerance, atol=0.0, M=pre,
                          maxiter=self.cfg.max_iterations or 10 * b.size)
        if info != 0:
            res = float(np.linalg.norm(self.matrix @ x - b) / np.linalg.norm(b))
            raise SolverDivergenceError("CG did not converge on grounded system", res, where="verify.adjoint_sensitivity")
        return x

    def expand(self, z: np.ndarray) -> np.ndarray:
        """Lift a vector over non-ground nodes to all nodes (zeros at ground)."""
        full = np.zeros(self.node_count)
        full[self.keep] = z
        return full


def ground_system(grid: WeightedGraph, ground_nodes, cfg: SolverConfig | None = None) -> GroundedSystem:
    where = "verify.ground_system"
    ground = np.unique(np.asarray(ground_nodes, dtype=np.int64))
    if ground.size == 0:
        raise ValueError("at least one ground node is required")
    n = grid.node_count
    ncomp, labels = grid.component_labels()
    if ncomp > 1:
        grounded = np.zeros(ncomp, dtype=bool)
        grounded[labels[ground]] = True
        floating = np.flatnonzero(~grounded[labels])
        if floating.size:
            raise FloatingIslandError(f"{floating.size} node(s) have no path to ground", floating.tolist(), where=where)
    keep = np.setdiff1d(np.arange(n), ground)
    L = build_laplacian(grid).matrix
    G = L[keep][:, keep].tocsc()
    return GroundedSystem(G, keep, n, cfg)


def adjoint_sensitivity(system: GroundedSystem, query_node: int) -> np.ndarray:
    """``z`` with ``G z = e_q`` over non-ground nodes; entries are nonnegative."""
    pos = system.position[query_node]
    if pos < 0:
        raise ValueError(f"node {query_node} is grounded")
    e = np.zeros(system.keep.size)
    e[pos] = 1.0
    z = system.solve(e)
    # inverse of an M-matrix is entrywise nonnegative; clear roundoff
    tiny = 1e-13 * z[pos]
    if np.any(z < -tiny):
        raise SolverDivergenceError("adjoint has negative entries", float(-z.min()), where="verify.adjoint_sensitivity")
    return np.maximum(z, 0.0)


def worst_case_voltage(z, c: CurrentConstraints) -> tuple[float, np.ndarray]:
    """Maximize ``z^T j`` over ``0 <= j <= I_max`` and laminar budgets.

    Nodes are filled in descending ``z`` (ties by index), each up to its
    bound or the smallest remaining capacity among budgets containing it.
    Greedy is optimal because the feasible set is a polymatroid.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.size != c.node_count:
        raise ValueError(f"sensitivity has {z.size} entries, constraints cover {c.node_count}")
    if np.any(z < 0):
        raise ValueError("sensitivities must be nonnegative")
    c.check_laminar()
    remaining = np.array([b for _, b in c.budgets], dtype=np.float64)
    member: dict[int, list[int]] = {}
    for k, (nodes, _) in enumerate(c.budgets):
        for p in nodes.tolist():
            member.setdefault(p, []).append(k)
    active = np.flatnonzero(c.upper_bounds > 0)
    order = active[np.lexsort((active, -z[active]))]
    j = np.zeros(c.node_count)
    for p in order.tolist():
        ks = member.get(p)
        amt = c.upper_bounds[p]
        if ks:
            amt = min(amt, remaining[ks].min())
            if amt <= 0:
                continue
            remaining[ks] -= amt
        j[p] = amt
    return float(z @ j), j


def verify(problem: VerificationProblem, solver: SolverConfig | None = None) -> WorstCaseResult:
    """Worst-case voltage at every query node, with one shared factorization."""
    problem.constraints.check_laminar()
    system = ground_system(problem.grid, problem.ground_nodes, solver)
    system.factor()
    q = problem.query_nodes
    values = np.zeros(q.size)
    witnesses = np.zeros((q.size, problem.grid.node_count))
    t_sol, t_lp = np.zeros(q.size), np.zeros(q.size)
    for i, node in enumerate(q.tolist()):
        try:
            t0 = time.perf_counter()
            z = system.expand(adjoint_sensitivity(system, node))
            t1 = time.perf_counter()
            values[i], witnesses[i] = worst_case_voltage(z, problem.constraints)
            t2 = time.perf_counter()
        except GridLearnError as exc:
            raise add_context(exc, f"query node {node}")
        t_sol[i], t_lp[i] = t1 - t0, t2 - t1
    return WorstCaseResult(q, values, witnesses, system.factor_time, t_sol, t_lp)


@dataclass(frozen=True)
class ProtocolConfig:
    """Synthetic constraint protocol for benchmark grids."""

    source_fraction: float = 0.10
    pad_fraction: float = 0.01
    i_max: float = 1.0
    global_fraction: float = 0.30
    regions: int = 4
    regional_fraction: float = 0.50
    queries: int = 100


def synthetic_problem(grid: WeightedGraph, seed: int = 0, cfg: ProtocolConfig | None = None) -> VerificationProblem:
    """Random pads, sources and query nodes with nested global/regional budgets.

    Regions are contiguous index bands, so on row-major meshes they are
    horizontal strips. The global budget contains every region, which keeps
    the family laminar.
    """
    cfg = cfg or ProtocolConfig()
    n = grid.node_count
    rng = np.random.default_rng(seed)
    n_pad = max(1, math.ceil(cfg.pad_fraction * n))
    ground = np.sort(rng.choice(n, size=n_pad, replace=False))
    free = np.setdiff1d(np.arange(n), ground)
    n_src = max(1, math.ceil(cfg.source_fraction * free.size))
    sources = np.sort(rng.choice(free, size=n_src, replace=False))
    ub = np.zeros(n)
    ub[sources] = cfg.i_max
    budgets = [(sources, cfg.global_fraction * ub.sum())]
    for band in np.array_split(np.arange(n), cfg.regions):
        cap = ub[band].sum()
        if cap > 0:
            budgets.append((band[ub[band] > 0], cfg.regional_fraction * cap))
    queries = np.sort(rng.choice(free, size=min(cfg.queries, free.size), replace=False))
    return VerificationProblem(grid, ground, CurrentConstraints(ub, tuple(budgets)), queries)
