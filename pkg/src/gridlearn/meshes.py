"""Synthetic unit-weight meshes used as ground-truth networks."""

from __future__ import annotations

import numpy as np

from .graph import WeightedGraph

MESH_KINDS = ("grid2d", "grid3d", "cycle", "tree")

_MAX_NODES = 50_000_000


def parse_dims(text: str) -> tuple[int, ...]:
    """``"64x64"`` -> ``(64, 64)``."""
    return tuple(int(p) for p in text.lower().replace("×", "x").split("x"))


def _grid(dims: tuple[int, ...]) -> WeightedGraph:
    n = int(np.prod(dims))
    idx = np.arange(n).reshape(dims)
    s, t = [], []
    for axis in range(len(dims)):
        a = np.delete(idx, -1, axis=axis) if dims[axis] > 1 else np.empty((0,), dtype=np.int64)
        b = np.delete(idx, 0, axis=axis) if dims[axis] > 1 else np.empty((0,), dtype=np.int64)
        s.append(a.ravel())
        t.append(b.ravel())
    s, t = np.concatenate(s), np.concatenate(t)
    return WeightedGraph.from_arrays(n, s, t, np.ones(s.size))


def gen_mesh(kind: str, dims) -> WeightedGraph:
    """Unit-weight structured mesh with row-major node numbering.

    ``grid2d`` takes ``(a, b)``, ``grid3d`` ``(a, b, c)``, ``cycle`` and
    ``tree`` a single node count; ``tree`` is the complete binary tree in
    heap order.
    """
    if isinstance(dims, str):
        dims = parse_dims(dims)
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    if any(d < 1 for d in dims):
        raise ValueError(f"dimensions must be positive, got {dims}")
    if np.prod(dims, dtype=float) > _MAX_NODES:
        raise OverflowError(f"mesh {dims} exceeds {_MAX_NODES} nodes")
    if kind == "grid2d":
        if len(dims) != 2:
            raise ValueError("grid2d needs two dimensions")
        return _grid(dims)
    if kind == "grid3d":
        if len(dims) != 3:
            raise ValueError("grid3d needs three dimensions")
        return _grid(dims)
    (n,) = dims
    if kind == "cycle":
        if n < 3:
            raise ValueError("cycle needs at least 3 nodes")
        s = np.arange(n)
        return WeightedGraph.from_arrays(n, s, (s + 1) % n, np.ones(n))
    if kind == "tree":
        child = np.arange(1, n)
        return WeightedGraph.from_arrays(n, (child - 1) // 2, child, np.ones(n - 1))
    raise ValueError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")
