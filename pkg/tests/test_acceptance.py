"""End-to-end acceptance criteria.

Each test records a ``criterion N: PASS|FAIL ...`` line (shown in the
terminal summary) before asserting, so a failing run still reports the
measured numbers.
"""

import itertools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from gridlearn.graph import PrecisionParams, build_laplacian, effective_resistances, objective_value
from gridlearn.initgraph import build_pool
from gridlearn.kernels import EigenConfig, eigen_pairs
from gridlearn.measurements import JlConfig, add_noise, generate_gaussian, generate_jl
from gridlearn.meshes import gen_mesh
from gridlearn.metrics import compute_metrics, mean_relative_error, sample_pairs
from gridlearn.multilevel import aggregate_graph, coarse_laplacian, coarsen_level, sf_sgl_learn
from gridlearn.sgl import eigen_embedding, edge_sensitivity, sgl_learn, spectral_scale
from gridlearn.verify import CurrentConstraints, VerificationProblem, adjoint_sensitivity, ground_system
from gridlearn.verify import synthetic_problem, verify, worst_case_voltage

from conftest import ACCEPTANCE_LINES
from oracles import dense_laplacian, lp_vertex_enumeration, pinv_resistance, random_connected

pytestmark = pytest.mark.slow


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def rel(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def absent_pairs(g):
    present = set(zip(g.s.tolist(), g.t.tolist()))
    return [p for p in itertools.combinations(range(g.node_count), 2) if p not in present]


def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {"resistance": 0.0, "eigen": 0.0, "coarsen": 0.0, "lp": 0.0}
    for k in range(50):
        n = int(rng.integers(4, 51))
        g = random_connected(rng, n, extra=float(rng.uniform(0.02, 0.3)))
        L = dense_laplacian(g)

        pairs = np.array(rng.choice(n, size=(10, 2), replace=True))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        ref = [pinv_resistance(g, s, t) for s, t in pairs]
        worst["resistance"] = max(worst["resistance"], rel(effective_resistances(g, pairs), ref))

        r = min(6, n - 1)
        lam_ref = np.linalg.eigvalsh(L)
        for method in ("dense", "lanczos"):
            if method == "lanczos" and r >= n - 2:
                continue
            lam, U = eigen_pairs(build_laplacian(g), EigenConfig(r, method=method))
            worst["eigen"] = max(worst["eigen"], rel(lam, lam_ref[1:r + 1]))
            # eigenvector agreement as residual relative to the spectral scale
            resid = np.linalg.norm(L @ U - U * lam, axis=0) / lam_ref[-1]
            worst["eigen"] = max(worst["eigen"], float(resid.max()))

        X = rng.standard_normal((n, 3))
        amap, gc, _ = coarsen_level(g, X)
        P = np.zeros((n, amap.coarse_count))
        P[np.arange(n), amap.assignment] = 1.0
        PLP = P.T @ L @ P
        scale = np.abs(PLP).max()
        worst["coarsen"] = max(
            worst["coarsen"],
            float(np.abs(coarse_laplacian(build_laplacian(g).matrix, amap).toarray() - PLP).max() / scale),
            float(np.abs(dense_laplacian(aggregate_graph(g, amap)) - PLP).max() / scale),
        )
        pattern = dense_laplacian(gc) != 0
        assert np.array_equal(pattern, np.abs(PLP) > 0)

        ground = rng.choice(n, size=max(1, n // 20), replace=False)
        free = np.setdiff1d(np.arange(n), ground)
        q = int(rng.choice(free))
        z = ground_system(g, ground).expand(adjoint_sensitivity(ground_system(g, ground), q))
        src = rng.choice(free, size=min(6, free.size), replace=False)
        ub = np.zeros(n)
        ub[src] = rng.uniform(0.2, 2.0, src.size)
        half = src[: src.size // 2]
        budgets = ((src, 0.6 * ub.sum()),) + (((half, 0.5 * ub[half].sum()),) if half.size else ())
        value, _ = worst_case_voltage(z, CurrentConstraints(ub, budgets))
        ref = lp_vertex_enumeration(z, ub, budgets)
        worst["lp"] = max(worst["lp"], abs(value - ref) / abs(ref))
    elapsed = time.perf_counter() - t0
    ok = (worst["resistance"] <= 1e-8 and worst["eigen"] <= 1e-8 and worst["coarsen"] <= 1e-8
          and worst["lp"] <= 1e-10 and elapsed < 60)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(1, ok, f"(max rel. err {detail}; {elapsed:.1f}s)")


def test_criterion_02_gradient_check():
    # the candidate edge is absent (w = 0) so w - dw is not a valid graph; the
    # one-sided three-point stencil has the same O(dw^2) truncation as a central difference
    rng = np.random.default_rng(202)
    dw = 1e-6
    errs = []
    while len(errs) < 200:
        n = int(rng.integers(8, 31))
        g = random_connected(rng, n, extra=0.1)
        X = rng.standard_normal((n, 5))
        emb = eigen_embedding(g, r=n - 1)
        params = PrecisionParams(eig_budget=n - 1)
        f0 = objective_value(g, X, params)
        cand = absent_pairs(g)
        for k in rng.choice(len(cand), size=min(10, len(cand), 200 - len(errs)), replace=False):
            s, t = cand[k]
            f1 = objective_value(g.add_edges([s], [t], [dw]), X, params)
            f2 = objective_value(g.add_edges([s], [t], [2 * dw]), X, params)
            fd = (-3 * f0 + 4 * f1 - f2) / (2 * dw)
            sens = edge_sensitivity(emb, X, s, t)
            errs.append(abs(fd - sens) / abs(sens))
    worst = max(errs)
    assert record(2, worst <= 1e-4, f"(200 candidate edges, max rel. err {worst:.2e})")


def exact_shift(lam, c, i, dw):
    """Exact eigenvalue shift of ``L + dw e e^T`` for eigenvalue ``i`` via the secular equation.

    With ``c_j = (u_j^T e)^2`` and ``d_j = lam_j - lam_i``, the shift ``delta``
    solves ``delta (1 + dw S(delta)) = dw c_i`` where
    ``S(delta) = sum_{j != i} c_j / (d_j - delta)``; the first-order residual
    is then exactly ``dw delta S(delta)``, free of cancellation.
    """
    d = lam - lam[i]
    others = np.arange(lam.size) != i

    def S(x):
        return np.sum(c[others] / (d[others] - x))

    upper = d[i + 1] if i + 1 < lam.size else dw * c.sum() * 2 + 1.0
    delta = brentq(lambda x: x * (1 + dw * S(x)) - dw * c[i], 0.0, upper * (1 - 1e-12), xtol=1e-300, rtol=1e-15)
    return delta, abs(dw * delta * S(delta))


def test_criterion_03_first_order_perturbation():
    rng = np.random.default_rng(303)
    dws = np.array([1e-2, 1e-3, 1e-4])
    slopes, cross = [], 0.0
    for k in range(8):
        n = int(rng.integers(10, 41))
        g = random_connected(rng, n, extra=0.1)
        lam, U = eigen_pairs(build_laplacian(g), EigenConfig(n - 1))
        lam_all = np.concatenate([[0.0], lam])
        s, t = absent_pairs(g)[int(rng.integers(len(absent_pairs(g))))]
        e = np.zeros(n)
        e[s], e[t] = 1.0, -1.0
        c = np.concatenate([[0.0], (U.T @ e) ** 2])
        for i in range(1, min(n, 11)):
            resid = []
            for dw in dws:
                delta, r = exact_shift(lam_all, c, i, dw)
                resid.append(r)
                # the secular root agrees with a direct eigen-decomposition of the perturbed graph
                lam2, _ = eigen_pairs(build_laplacian(g.add_edges([s], [t], [dw])), EigenConfig(n - 1))
                cross = max(cross, abs(lam2[i - 1] - lam[i - 1] - delta) / lam[-1])
            slopes.append(np.polyfit(np.log(dws), np.log(resid), 1)[0])
    worst = float(min(slopes))
    assert cross <= 1e-12
    assert record(3, worst >= 1.9, f"({len(slopes)} eigenvalue/edge pairs, min fitted exponent {worst:.3f})")


def test_criterion_04_sgl_convergence():
    g = gen_mesh("grid2d", (100, 100))
    t0 = time.perf_counter()
    ms = generate_gaussian(g, 50, seed=0)
    learned, report = sgl_learn(ms, build_pool(ms.X))
    elapsed = time.perf_counter() - t0
    dens = learned.edge_count / learned.node_count
    ok = report.converged and report.iterations <= 100 and report.s_max_trace[-1] < 1e-12 and dens <= 1.10
    assert record(4, ok, f"({report.iterations} iterations, final s_max {report.s_max_trace[-1]:.2e}, "
                         f"density {dens:.3f}, {elapsed:.0f}s)")


@pytest.fixture(scope="module")
def sf_grid64():
    g = gen_mesh("grid2d", (64, 64))
    ms = generate_gaussian(g, 50, seed=0)
    t0 = time.perf_counter()
    learned, report = sf_sgl_learn(ms, build_pool(ms.X))
    return g, ms, learned, report, time.perf_counter() - t0


def test_criterion_05_spectrum_and_resistance(sf_grid64):
    g, _, learned, _, elapsed = sf_grid64
    rep = compute_metrics(g, learned, eig_count=50, pair_count=100)
    ok = rep.err_lambda <= 0.25 and rep.err_resistance <= 0.35 and rep.density_learned <= 1.15 and elapsed <= 300
    assert record(5, ok, f"(Err(lambda) {rep.err_lambda:.3f}, Err(R) {rep.err_resistance:.3f}, "
                         f"density {rep.density_learned:.3f}, {elapsed:.0f}s)")


def test_criterion_06_scaling_identity():
    g = gen_mesh("grid2d", (32, 32))
    ms = generate_gaussian(g, 50, seed=6)
    _, a1 = spectral_scale(g, ms)
    half, a2 = spectral_scale(g.scaled(0.5), ms)
    _, a3 = spectral_scale(half, ms)
    ok = abs(a1 - 1) <= 1e-8 and abs(a2 - 2) <= 1e-6 and abs(a3 - 1) <= 1e-8
    assert record(6, ok, f"(alpha' {a1:.12f}, {a2:.10f}, {a3:.12f})")


def test_criterion_07_random_projection_sample_complexity():
    g = gen_mesh("grid2d", (32, 32))
    eps = 0.3
    M = math.ceil(24 * math.log(g.node_count) / eps**2)
    hits = total = 0
    for seed in range(10):
        ms = generate_jl(g, JlConfig(epsilon=eps), seed=seed)
        assert ms.M == M
        pairs = sample_pairs(g.node_count, 200, seed=1000 + seed)
        z = np.sum((ms.X[pairs[:, 0]] - ms.X[pairs[:, 1]]) ** 2, axis=1)
        r = effective_resistances(g, pairs)
        hits += int(np.sum(np.abs(z - r) < eps * r))
        total += pairs.shape[0]
    frac = hits / total
    assert record(7, frac >= 0.9, f"(M={M}, {frac:.1%} of {total} pairs within 1 +/- {eps})")


def test_criterion_08_noise_robustness():
    g = gen_mesh("grid2d", (32, 32))
    lam_true, _ = eigen_pairs(build_laplacian(g), EigenConfig(5))
    medians, first5, worst_single = [], [], []
    for zeta in (0.0, 0.1, 0.5):
        errs = []
        for seed in range(5):
            ms = add_noise(generate_gaussian(g, 50, seed=seed), zeta, seed=seed)
            learned, _ = sgl_learn(ms, build_pool(ms.X))
            errs.append(compute_metrics(g, learned, eig_count=50, seed=seed).err_lambda)
            if zeta == 0.5:
                lam, _ = eigen_pairs(build_laplacian(learned), EigenConfig(5))
                first5.append(mean_relative_error(lam, lam_true))
                worst_single.append(rel(lam, lam_true))
        medians.append(float(np.median(errs)))
    monotone = medians[0] <= medians[1] <= medians[2]
    low = float(np.median(first5))
    ok = monotone and low <= 0.5
    assert record(8, ok, f"(median Err(lambda) {medians[0]:.3f} / {medians[1]:.3f} / {medians[2]:.3f}; "
                         f"zeta=0.5 first-5 Err {low:.3f}, largest single-eigenvalue error "
                         f"{float(np.median(worst_single)):.3f})")


def test_criterion_09_verification_agreement():
    g = gen_mesh("grid2d", (50, 50))
    t0 = time.perf_counter()
    ms = generate_gaussian(g, 50, seed=0)
    learned, _ = sf_sgl_learn(ms, build_pool(ms.X))
    prob = synthetic_problem(g, seed=0)
    ref = verify(prob)
    mine = verify(VerificationProblem(learned, prob.ground_nodes, prob.constraints, prob.query_nodes))
    err = mean_relative_error(mine.values, ref.values)
    elapsed = time.perf_counter() - t0
    ok = err <= 0.05 and elapsed <= 300
    assert record(9, ok, f"(mean rel. err {err:.1%} over {ref.values.size} query nodes, {elapsed:.0f}s)")


def test_criterion_10_runtime_scaling():
    sizes, times = [], []
    warm = generate_gaussian(gen_mesh("grid2d", (8, 8)), 5, seed=0)
    sf_sgl_learn(warm, build_pool(warm.X))
    for side in (32, 64, 128):
        g = gen_mesh("grid2d", (side, side))
        ms = generate_gaussian(g, 50, seed=0)
        best = np.inf
        for _ in range(2 if side < 128 else 1):
            t0 = time.perf_counter()
            sf_sgl_learn(ms, build_pool(ms.X))
            best = min(best, time.perf_counter() - t0)
        sizes.append(g.node_count)
        times.append(best)
    slope = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
    detail = ", ".join(f"N={n}: {t:.1f}s" for n, t in zip(sizes, times))
    assert record(10, slope <= 1.3, f"(log-log slope {slope:.2f}; {detail})")


def test_criterion_11_property_suites():
    tests = Path(__file__).parent
    done = subprocess.run(
        [sys.executable, "-m", "pytest", str(tests), "-q", "-p", "no:cacheprovider",
         f"--ignore={tests / 'test_acceptance.py'}"],
        capture_output=True, text=True, cwd=tests.parent,
    )
    tail = done.stdout.strip().splitlines()[-1] if done.stdout.strip() else done.stderr.strip()
    failed = [line.split()[1] for line in done.stdout.splitlines() if line.startswith("FAILED")]
    detail = f"({tail})" + (f" failing: {', '.join(failed)}" if failed else "")
    assert record(11, done.returncode == 0, detail)
