"""File formats: Matrix Market graphs, measurement CSV, reports, layouts and verification problems."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import GridLearnError, InvalidMeasurementError, MalformedGraphError
from .graph import WeightedGraph
from .measurements import SOURCES, MeasurementSet
from .verify import CurrentConstraints, VerificationProblem, WorstCaseResult

CONVENTIONS = ("adjacency", "laplacian")
_FLAG = "%gridlearn"


def write_graph(path, g: WeightedGraph, convention: str = "adjacency", hex_weights: bool = True) -> None:
    """Symmetric real Matrix Market, lower triangle, 1-based.

    ``adjacency`` stores ``(t, s, w)``; ``laplacian`` stores ``(t, s, -w)``
    plus the diagonal. With ``hex_weights`` every entry carries a fourth
    column holding the exact value as a hexadecimal float literal.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    n = g.node_count
    rows, cols, vals = g.t + 1, g.s + 1, g.w.copy()
    if convention == "laplacian":
        deg = np.bincount(g.s, weights=g.w, minlength=n) + np.bincount(g.t, weights=g.w, minlength=n)
        rows = np.concatenate([rows, np.arange(1, n + 1)])
        cols = np.concatenate([cols, np.arange(1, n + 1)])
        vals = np.concatenate([-vals, deg])
    flags = f"{_FLAG} convention={convention}" + (" hexweights" if hex_weights else "")
    lines = ["%%MatrixMarket matrix coordinate real symmetric", flags, f"{n} {n} {rows.size}"]
    for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        lines.append(f"{i} {j} {v!r} {v.hex()}" if hex_weights else f"{i} {j} {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path, convention: str | None = None) -> WeightedGraph:
    """Inverse of :func:`write_graph`; also reads plain decimal Matrix Market files.

    The convention comes from the file's flag comment unless given; files
    without one are read as adjacency unless they contain diagonal entries.
    """
    where = "io.read_graph"
    text = Path(path).read_text().splitlines()
    if not text or not text[0].lower().startswith("%%matrixmarket"):
        raise MalformedGraphError(f"{path}: missing Matrix Market banner", where=where)
    banner = text[0].lower().split()
    if len(banner) < 5 or banner[2] != "coordinate" or banner[3] not in ("real", "integer"):
        raise MalformedGraphError(f"{path}: only real coordinate matrices are supported", where=where)
    symmetry = banner[4]
    if symmetry not in ("symmetric", "general"):
        raise MalformedGraphError(f"{path}: unsupported symmetry {symmetry!r}", where=where)
    file_conv = None
    body = []
    for line in text[1:]:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("%"):
            if stripped.startswith(_FLAG):
                for tok in stripped.split()[1:]:
                    if tok.startswith("convention="):
                        file_conv = tok.split("=", 1)[1]
            continue
        body.append(stripped.split())
    if not body:
        raise MalformedGraphError(f"{path}: missing size line", where=where)
    try:
        nr, nc, nnz = (int(v) for v in body[0])
    except ValueError as exc:
        raise MalformedGraphError(f"{path}: bad size line {' '.join(body[0])!r}", where=where) from exc
    if nr != nc:
        raise MalformedGraphError(f"{path}: matrix is {nr}x{nc}, not square", where=where)
    entries = body[1:]
    if len(entries) != nnz:
        raise MalformedGraphError(f"{path}: header declares {nnz} entries, found {len(entries)}", where=where)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    for k, tok in enumerate(entries):
        try:
            rows[k], cols[k] = int(tok[0]) - 1, int(tok[1]) - 1
            vals[k] = float.fromhex(tok[3]) if len(tok) > 3 else float(tok[2])
        except (ValueError, IndexError) as exc:
            raise MalformedGraphError(f"{path}: bad entry line {k + 1}: {' '.join(tok)!r}", where=where) from exc
    if nnz and (rows.min() < 0 or cols.min() < 0 or rows.max() >= nr or cols.max() >= nr):
        raise MalformedGraphError(f"{path}: entry index out of range", where=where)
    diag = rows == cols
    conv = convention or file_conv or ("laplacian" if diag.any() else "adjacency")
    if conv not in CONVENTIONS:
        raise MalformedGraphError(f"{path}: unknown convention {conv!r}", where=where)
    off = ~diag
    r, c, v = rows[off], cols[off], vals[off]
    if conv == "laplacian":
        v = -v
    elif diag.any():
        raise MalformedGraphError(f"{path}: adjacency file has diagonal entries", where=where)
    if symmetry == "general":
        s, t = np.minimum(r, c), np.maximum(r, c)
        keys = s * nr + t
        order = np.lexsort((v, keys))
        keys, s, t, v = keys[order], s[order], t[order], v[order]
        first = np.ones(keys.size, dtype=bool)
        first[1:] = keys[1:] != keys[:-1]
        start = np.flatnonzero(first)
        if np.any(np.maximum.reduceat(v, start) != np.minimum.reduceat(v, start)):
            raise MalformedGraphError(f"{path}: general matrix is not symmetric", where=where)
        r, c, v = s[start], t[start], v[start]
    try:
        return WeightedGraph.from_arrays(nr, r, c, v)
    except MalformedGraphError as exc:
        raise MalformedGraphError(f"{path}: {exc.args[0]}", where=where) from exc


def write_measurements(path, ms: MeasurementSet) -> None:
    """One header line ``N=..,M=..,zeta=..,source=..,currents=0|1``, then one CSV line per column.

    Voltage columns come first, then current columns when present. Values
    use 17 significant digits, which round-trips doubles exactly.
    """
    header = f"N={ms.N},M={ms.M},zeta={ms.noise_level!r},source={ms.source},currents={int(ms.Y is not None)}"
    blocks = [ms.X.T] if ms.Y is None else [ms.X.T, ms.Y.T]
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for block in blocks:
            np.savetxt(fh, block, fmt="%.17g", delimiter=",")


def read_measurements(path) -> MeasurementSet:
    where = "io.read_measurements"
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            meta = dict(item.split("=", 1) for item in header.split(","))
            n, m = int(meta["N"]), int(meta["M"])
            zeta, source, has_y = float(meta["zeta"]), meta["source"], meta.get("currents", "0") == "1"
        except (KeyError, ValueError) as exc:
            raise InvalidMeasurementError(f"{path}: bad header {header!r}", where=where) from exc
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    want = 2 * m if has_y else m
    if data.shape != (want, n):
        raise InvalidMeasurementError(f"{path}: expected {want} lines of {n} values, got shape {data.shape}", where=where)
    if source not in SOURCES:
        raise InvalidMeasurementError(f"{path}: unknown source {source!r}", where=where)
    X = data[:m].T.copy()
    Y = data[m:].T.copy() if has_y else None
    return MeasurementSet(X, Y, zeta, source)


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_layout(path, coords: np.ndarray) -> None:
    """CSV ``node,x,y``."""
    coords = np.asarray(coords, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("node,x,y\n")
        for i, (x, y) in enumerate(coords[:, :2].tolist()):
            fh.write(f"{i},{x!r},{y!r}\n")


def write_series(path, name: str, values) -> None:
    """Single-column CSV with an index, e.g. an s_max trace."""
    with open(path, "w") as fh:
        fh.write(f"index,{name}\n")
        for i, v in enumerate(np.asarray(values, dtype=np.float64).tolist()):
            fh.write(f"{i},{v!r}\n")


def write_hierarchy(directory, hier) -> None:
    """Per-level Matrix Market graph plus the fine-to-coarse assignment vector."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for k, level in enumerate(hier.levels):
        write_graph(out / f"level{k}.mtx", level.graph)
        if level.amap is not None:
            np.savetxt(out / f"level{k}_assignment.csv", level.amap.assignment, fmt="%d")


def read_problem(path) -> VerificationProblem:
    """Verification problem JSON.

    Keys: ``graph`` (Matrix Market path, relative to the JSON file),
    ``ground`` (node list), ``upper_bounds`` (per-node list) or
    ``sources`` + ``i_max``, ``budgets`` (list of ``{"nodes", "bound"}``)
    and ``queries`` (node list).
    """
    path = Path(path)
    spec = read_json(path)
    try:
        g = read_graph(path.parent / spec["graph"])
        if "upper_bounds" in spec:
            ub = np.asarray(spec["upper_bounds"], dtype=np.float64)
        else:
            ub = np.zeros(g.node_count)
            ub[np.asarray(spec["sources"], dtype=np.int64)] = float(spec.get("i_max", 1.0))
        budgets = tuple((np.asarray(b["nodes"], dtype=np.int64), float(b["bound"])) for b in spec.get("budgets", []))
        return VerificationProblem(g, np.asarray(spec["ground"]), CurrentConstraints(ub, budgets),
                                   np.asarray(spec["queries"]))
    except KeyError as exc:
        raise GridLearnError(f"{path}: missing key {exc.args[0]!r}", where="io.read_problem") from exc


def write_problem(path, problem: VerificationProblem, graph_file: str) -> None:
    """Write ``problem`` as JSON next to a Matrix Market copy of its grid named ``graph_file``."""
    path = Path(path)
    write_graph(path.parent / graph_file, problem.grid)
    c = problem.constraints
    payload = {
        "graph": graph_file,
        "ground": problem.ground_nodes.tolist(),
        "upper_bounds": c.upper_bounds.tolist(),
        "budgets": [{"nodes": nodes.tolist(), "bound": bound} for nodes, bound in c.budgets],
        "queries": problem.query_nodes.tolist(),
    }
    write_json(path, payload)


def write_verify_result(csv_path, json_path, result: WorstCaseResult) -> None:
    with open(csv_path, "w") as fh:
        fh.write("node,worst_value\n")
        for node, val in zip(result.query_nodes.tolist(), result.values.tolist()):
            fh.write(f"{node},{val!r}\n")
    write_json(json_path, result.stats())
