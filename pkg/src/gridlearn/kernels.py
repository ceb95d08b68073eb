"""Laplacian solves, truncated eigendecomposition and Gauss-Seidel smoothing."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConnectivityError,
    DimensionError,
    EigensolverError,
    InconsistentRhsError,
    SolverDivergenceError,
)
from .graph import LaplacianView


@dataclass(frozen=True)
class SolverConfig:
    """``method`` is ``"direct"`` (sparse LU of the grounded matrix) or ``"cg"``.

    ``pin_node=None`` selects project-mean nullspace handling; an integer
    pins that node's potential to zero instead.
    """

    method: str = "direct"
    tolerance: float = 1e-10
    max_iterations: int | None = None
    pin_node: int | None = None

    def __post_init__(self):
        if self.method not in ("direct", "cg"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class EigenConfig:
    r: int = 5
    method: str = "auto"  # "auto", "dense" or "lanczos"
    dense_cutoff: int = 2000
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.method not in ("auto", "dense", "lanczos"):
            raise ValueError(f"unknown eigen method {self.method!r}")


@dataclass(frozen=True)
class SmootherConfig:
    K: int = 5
    sweeps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.sweeps < 1:
            raise ValueError("K and sweeps must be >= 1")


def _check_connected(L: LaplacianView, where: str) -> None:
    ncomp, _ = L.graph.component_labels()
    if ncomp != 1:
        raise ConnectivityError(f"Laplacian has {ncomp} connected components", where=where)


class LaplacianSolver:
    """Reusable solver for ``L x = b`` on a connected graph.

    The direct method factorizes the Laplacian with one node grounded, once,
    and reuses the factors for every right-hand side.
    """

    def __init__(self, L: LaplacianView, cfg: SolverConfig | None = None):
        self.L = L
        self.cfg = cfg or SolverConfig()
        n = L.n
        _check_connected(L, "kernels.solve_laplacian")
        self.pin = n - 1 if self.cfg.pin_node is None else int(self.cfg.pin_node)
        if not 0 <= self.pin < n:
            raise ValueError(f"pin node {self.pin} out of range")
        self.keep = np.delete(np.arange(n), self.pin)
        self.factor_time = 0.0
        self._lu = None
        if self.cfg.method == "direct" and n > 1:
            t0 = time.perf_counter()
            A = L.matrix[self.keep][:, self.keep].tocsc()
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
            self.factor_time = time.perf_counter() - t0
        if self.cfg.method == "cg":
            d = L.matrix.diagonal()
            self._jacobi = sp.diags(1.0 / d)

    @property
    def project_mean(self) -> bool:
        return self.cfg.pin_node is None

    def _direct(self, b: np.ndarray) -> np.ndarray:
        x = np.zeros_like(b)
        x[self.keep] = self._lu.solve(np.ascontiguousarray(b[self.keep]))
        return x

    def _residual(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        r = self.L.matrix @ x - b
        bn = b.copy()
        if not self.project_mean:
            r[self.pin] = 0.0
            bn[self.pin] = 0.0
        rn = np.linalg.norm(r, axis=0)
        bnorm = np.linalg.norm(bn, axis=0)
        return np.where(bnorm > 0, rn / np.where(bnorm > 0, bnorm, 1.0), rn)

    def solve(self, b) -> np.ndarray:
        where = "kernels.solve_laplacian"
        b = np.asarray(b, dtype=np.float64)
        vec = b.ndim == 1
        B = b[:, None] if vec else b
        n = self.L.n
        if B.shape[0] != n:
            raise DimensionError(f"rhs has {B.shape[0]} rows, Laplacian has {n}", where=where)
        tol = self.cfg.tolerance
        if self.project_mean:
            off = np.abs(B.sum(axis=0)) / np.sqrt(n)
            scale = np.maximum(np.linalg.norm(B, axis=0), np.finfo(float).tiny)
            if np.any(off > tol * scale):
                raise InconsistentRhsError(
                    "right-hand side is not orthogonal to the all-ones vector", where=where
                )
            B = B - B.mean(axis=0)
        if n == 1:
            X = np.zeros_like(B)
        elif self.cfg.method == "direct":
            X = self._direct(B)
            for _ in range(3):
                res = self._residual(X, B)
                if np.all(res <= tol):
                    break
                R = B - self.L.matrix @ X
                if not self.project_mean:
                    R[self.pin] = 0.0
                X = X + self._direct(R)
        else:
            X = np.column_stack([self._cg(B[:, j], where) for j in range(B.shape[1])])
        if self.project_mean:
            X = X - X.mean(axis=0)
        res = self._residual(X, B)
        if np.any(res > tol):
            raise SolverDivergenceError(
                f"relative residual {res.max():.3e} exceeds tolerance {tol:.1e}", float(res.max()), where=where
            )
        return X[:, 0] if vec else X

    def _cg(self, b: np.ndarray, where: str) -> np.ndarray:
        n = self.L.n
        if not np.any(b):
            return np.zeros(n)
        maxiter = self.cfg.max_iterations or 10 * n
        if self.project_mean:
            A, rhs, M = self.L.matrix, b, self._jacobi
        else:
            A = self.L.matrix[self.keep][:, self.keep]
            rhs = b[self.keep]
            M = sp.diags(1.0 / A.diagonal())
        x, info = spla.cg(A, rhs, rtol=self.cfg.tolerance * 0.5, atol=0.0, maxiter=maxiter, M=M)
        if self.project_mean:
            x = x - x.mean()
        else:
            full = np.zeros(n)
            full[self.keep] = x
            x = full
        if info != 0:
            res = float(self._residual(x[:, None], b[:, None])[0])
            if res > self.cfg.tolerance:
                raise SolverDivergenceError(
                    f"CG did not converge in {maxiter} iterations (residual {res:.3e})", res, where=where
                )
        return x


def solve_laplacian(L: LaplacianView, b, cfg: SolverConfig | None = None) -> np.ndarray:
    return LaplacianSolver(L, cfg).solve(b)


def _fix_signs(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def eigen_pairs(L: LaplacianView, cfg: EigenConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``cfg.r`` nonzero eigenpairs of a connected Laplacian.

    Returns ``(lam, U)`` with ``lam`` ascending and ``U`` of shape ``(N, r)``.
    Large graphs run Lanczos on the pseudoinverse, applied through a sparse
    factorization of the grounded Laplacian.
    """
    where = "kernels.eigen_pairs"
    cfg = cfg or EigenConfig()
    n = L.n
    if cfg.r > n - 1:
        raise ValueError(f"r = {cfg.r} exceeds N-1 = {n - 1}")
    _check_connected(L, where)
    method = cfg.method
    if method == "auto":
        method = "dense" if n <= cfg.dense_cutoff else "lanczos"
    # Lanczos needs k < n; tiny problems go dense regardless
    if method == "lanczos" and cfg.r >= n - 2:
        method = "dense"
    if method == "dense":
        A = L.matrix.toarray()
        try:
            lam, U = sla.eigh(A, subset_by_index=[1, cfg.r])
        except np.linalg.LinAlgError:
            # the subset driver occasionally fails on clustered spectra; the full one does not
            lam, U = sla.eigh(A, driver="evd")
            lam, U = lam[1:cfg.r + 1], U[:, 1:cfg.r + 1]
    else:
        solver = LaplacianSolver(L, SolverConfig())

        def op(v):
            v = np.asarray(v, dtype=np.float64).ravel()
            x = solver._direct((v - v.mean())[:, None])[:, 0]
            return x - x.mean()

        A = spla.LinearOperator((n, n), matvec=op, dtype=np.float64)
        v0 = np.random.default_rng(12345).standard_normal(n)
        v0 -= v0.mean()
        try:
            mu, U = spla.eigsh(A, k=cfg.r, which="LA", v0=v0, ncv=min(n - 1, max(2 * cfg.r + 1, 24)))
        except spla.ArpackError as exc:
            raise EigensolverError(f"Lanczos failed: {exc}", where=where) from exc
        order = np.argsort(-mu)
        mu, U = mu[order], U[:, order]
        if np.any(mu <= 0):
            raise EigensolverError("non-positive pseudoinverse eigenvalue", where=where)
        lam = 1.0 / mu
        U = U - U.mean(axis=0)
    U = _fix_signs(np.asarray(U))
    if lam[0] <= 0:
        raise ConnectivityError("zero second eigenvalue", where=where)
    res = np.linalg.norm(L.matrix @ U - U * lam, axis=0)
    # rounding floor relative to ||L|| for graphs with tiny lambda_2
    floor = 1e3 * np.finfo(float).eps * spla.norm(L.matrix, 1)
    if np.any(res > cfg.tolerance * lam + floor):
        raise EigensolverError(f"eigen residual {res.max():.3e} too large", where=where)
    return lam, U


@numba.njit(cache=True)
def _gs_sweeps(indptr, indices, data, diag, B, sweeps):
    n, K = B.shape
    for _ in range(sweeps):
        for k in range(K):
            for i in range(n):
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    j = indices[p]
                    if j != i:
                        acc -= data[p] * B[j, k]
                B[i, k] = acc / diag[i]
            for i in range(n - 1, -1, -1):
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    j = indices[p]
                    if j != i:
                        acc -= data[p] * B[j, k]
                B[i, k] = acc / diag[i]
    return B


def gauss_seidel(L: LaplacianView, B: np.ndarray, sweeps: int) -> np.ndarray:
    """Symmetric Gauss-Seidel sweeps (forward then backward) on ``L b = 0``, in place."""
    A = L.matrix
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ConnectivityError("isolated node in smoothing input", where="kernels.smooth_embedding")
    return _gs_sweeps(A.indptr, A.indices, A.data, diag, B, sweeps)


def random_start(n: int, K: int, seed: int) -> np.ndarray:
    B = np.random.default_rng(seed).standard_normal((n, K))
    B -= B.mean(axis=0)
    B /= np.linalg.norm(B, axis=0)
    return B


def smooth_embedding(L: LaplacianView, cfg: SmootherConfig | None = None) -> np.ndarray:
    """Low-pass filtered random embedding, shape ``(N, K)``.

    Each column starts as a seeded Gaussian vector orthogonalized against the
    all-ones vector and normalized, receives ``cfg.sweeps`` symmetric
    Gauss-Seidel sweeps on ``L b = 0``, and is mean-centred again.
    """
    cfg = cfg or SmootherConfig()
    _check_connected(L, "kernels.smooth_embedding")
    B = random_start(L.n, cfg.K, cfg.seed)
    gauss_seidel(L, B, cfg.sweeps)
    B -= B.mean(axis=0)
    return B


def spectral_layout(L: LaplacianView) -> np.ndarray:
    """2-D drawing coordinates ``[u_2, u_3]``."""
    if L.n < 3:
        raise ValueError("spectral layout needs at least 3 nodes")
    _, U = eigen_pairs(L, EigenConfig(r=2))
    return U
