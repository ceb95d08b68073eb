"""Command-line front end.

Every command reads its settings from an optional JSON document
(``--config``) whose top-level keys are ``common`` and the command names;
explicit flags override the document.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

from . import io
from .errors import GridLearnError
from .graph import build_laplacian, density
from .initgraph import KnnConfig, build_pool
from .kernels import SmootherConfig, spectral_layout
from .measurements import JlConfig, add_noise, generate_gaussian, generate_jl
from .meshes import MESH_KINDS, gen_mesh
from .metrics import compute_metrics
from .multilevel import SfSglConfig, sf_sgl_learn
from .sgl import SglConfig, sgl_learn
from .verify import verify

log = logging.getLogger("gridlearn")

# command -> {option: default}; None marks a required value
DEFAULTS = {
    "gen-mesh": {"kind": "grid2d", "dims": None, "out": "graph.mtx"},
    "gen-measurements": {"graph": None, "m": 50, "noise": 0.0, "jl_epsilon": None, "seed": 0,
                         "out": "measurements.csv"},
    "learn-sgl": {"measurements": None, "k": 5, "r": 5, "beta": 1e-3, "tol": 1e-12, "max_iterations": 500,
                  "out": "learned.mtx", "report": None, "trace": None},
    "learn-sfsgl": {"measurements": None, "k": 5, "r": 5, "beta": 1e-3, "tol": 1e-12, "max_iterations": 500,
                    "coarsest": 500, "ratio": 2.0, "seed": 0, "out": "learned.mtx", "report": None,
                    "trace": None},
    "metrics": {"reference": None, "learned": None, "eigs": 50, "pairs": 100, "seed": 0, "out": None},
    "layout": {"graph": None, "out": "layout.csv"},
    "verify": {"problem": None, "out": "worst.csv", "stats": None},
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridlearn", description="Learn resistor networks from voltage/current data.")
    p.add_argument("--config", help="JSON settings document; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("gen-mesh", help="write a unit-weight mesh")
    c.add_argument("--kind", choices=MESH_KINDS)
    c.add_argument("--dims", help="e.g. 64x64, 10x10x10 or 100")
    c.add_argument("--out")

    c = sub.add_parser("gen-measurements", help="simulate voltage/current measurements on a graph")
    c.add_argument("--graph")
    c.add_argument("--m", type=int, help="number of measurement columns (Gaussian protocol)")
    c.add_argument("--noise", type=float)
    c.add_argument("--jl-epsilon", type=float, dest="jl_epsilon", help="use the random-projection protocol")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")

    for name in ("learn-sgl", "learn-sfsgl"):
        c = sub.add_parser(name, help="learn a graph from measurements")
        c.add_argument("--measurements")
        c.add_argument("--k", type=int)
        c.add_argument("--r", type=int)
        c.add_argument("--beta", type=float)
        c.add_argument("--tol", type=float)
        c.add_argument("--max-iterations", type=int, dest="max_iterations")
        if name == "learn-sfsgl":
            c.add_argument("--coarsest", type=int)
            c.add_argument("--ratio", type=float)
            c.add_argument("--seed", type=int)
        c.add_argument("--out")
        c.add_argument("--report", help="LearnReport JSON (default: OUT with .json suffix)")
        c.add_argument("--trace", help="CSV of the s_max trace")

    c = sub.add_parser("metrics", help="compare a learned graph with a reference")
    c.add_argument("--reference")
    c.add_argument("--learned")
    c.add_argument("--eigs", type=int)
    c.add_argument("--pairs", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", help="MetricsReport JSON")

    c = sub.add_parser("layout", help="two-dimensional spectral drawing coordinates")
    c.add_argument("--graph")
    c.add_argument("--out")

    c = sub.add_parser("verify", help="worst-case voltage at query nodes")
    c.add_argument("--problem")
    c.add_argument("--out")
    c.add_argument("--stats")
    return p


def resolve(command: str, flags: dict, config: dict | None) -> dict:
    """Merge defaults, the config document and explicit flags, in that order."""
    config = config or {}
    unknown = set(config) - set(DEFAULTS) - {"common"}
    if unknown:
        raise GridLearnError(f"unknown config section(s): {sorted(unknown)}", where="cli.config")
    opts = dict(DEFAULTS[command])
    for section in ("common", command):
        for key, val in config.get(section, {}).items():
            key = key.replace("-", "_")
            if key in opts:
                opts[key] = val
            elif section == command:
                raise GridLearnError(f"unknown option {key!r} for {command}", where="cli.config")
    for key, val in flags.items():
        if key in opts and val is not None:
            opts[key] = val
    missing = [k for k, v in opts.items() if v is None and k not in ("jl_epsilon", "report", "trace", "out", "stats")]
    if missing:
        raise GridLearnError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}",
                         where=f"cli.{command}")
    return opts


def _learn(opts: dict, multilevel: bool) -> str:
    ms = io.read_measurements(opts["measurements"])
    sgl_cfg = SglConfig(r=opts["r"], tol=opts["tol"], beta_sample=opts["beta"],
                        max_iterations=opts["max_iterations"])
    pool = build_pool(ms.X, KnnConfig(k=opts["k"]))
    if multilevel:
        cfg = SfSglConfig(coarsest_size=opts["coarsest"], ratio_target=opts["ratio"], beta_sample=opts["beta"],
                          smoother=SmootherConfig(seed=opts["seed"]), sgl=sgl_cfg)
        g, report = sf_sgl_learn(ms, pool, cfg)
    else:
        g, report = sgl_learn(ms, pool, sgl_cfg)
    out = Path(opts["out"])
    io.write_graph(out, g)
    payload = report.to_dict()
    payload["density"] = density(g)
    io.write_json(opts["report"] or out.with_suffix(".json"), payload)
    if opts["trace"]:
        io.write_series(opts["trace"], "s_max", report.s_max_trace)
    return (f"learned {g.node_count} nodes, {g.edge_count} edges (density {density(g):.4f}) in "
            f"{report.iterations} iterations, alpha'={report.alpha_prime:.6g} -> {out}")


def execute(command: str, opts: dict) -> str:
    """Run one command with resolved options; returns the summary line."""
    if command == "gen-mesh":
        g = gen_mesh(opts["kind"], opts["dims"])
        io.write_graph(opts["out"], g)
        return f"wrote {opts['kind']} mesh with {g.node_count} nodes, {g.edge_count} edges -> {opts['out']}"
    if command == "gen-measurements":
        g = io.read_graph(opts["graph"])
        if opts["jl_epsilon"] is not None:
            ms = generate_jl(g, JlConfig(epsilon=opts["jl_epsilon"]), opts["seed"])
        else:
            ms = generate_gaussian(g, opts["m"], opts["seed"])
        if opts["noise"]:
            ms = add_noise(ms, opts["noise"], opts["seed"])
        io.write_measurements(opts["out"], ms)
        return f"wrote {ms.M} {ms.source} measurements over {ms.N} nodes (noise {ms.noise_level}) -> {opts['out']}"
    if command == "learn-sgl":
        return _learn(opts, multilevel=False)
    if command == "learn-sfsgl":
        return _learn(opts, multilevel=True)
    if command == "metrics":
        ref, learned = io.read_graph(opts["reference"]), io.read_graph(opts["learned"])
        rep = compute_metrics(ref, learned, opts["eigs"], opts["pairs"], opts["seed"])
        if opts["out"]:
            io.write_json(opts["out"], rep.to_dict())
        return (f"Err(lambda)={rep.err_lambda:.4f} over {rep.eig_count} eigenvalues, "
                f"Err(R)={rep.err_resistance:.4f} over {rep.pair_count} pairs, "
                f"density {rep.density_original:.3f} -> {rep.density_learned:.3f}")
    if command == "layout":
        g = io.read_graph(opts["graph"])
        io.write_layout(opts["out"], spectral_layout(build_laplacian(g)))
        return f"wrote layout of {g.node_count} nodes -> {opts['out']}"
    if command == "verify":
        problem = io.read_problem(opts["problem"])
        res = verify(problem)
        stats = opts["stats"] or str(Path(opts["out"]).with_suffix(".json"))
        io.write_verify_result(opts["out"], stats, res)
        return (f"verified {res.query_nodes.size} nodes: max worst-case {res.values.max(initial=0.0):.6g}, "
                f"mean {res.values.mean() if res.values.size else 0.0:.6g} -> {opts['out']}")
    raise GridLearnError(f"unknown command {command!r}", where="cli.run")


def _thread_limit():
    raw = os.environ.get("RESNET_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise GridLearnError(f"RESNET_THREADS must be an integer, got {raw!r}", where="cli.run") from None
    if n < 1:
        raise GridLearnError("RESNET_THREADS must be >= 1", where="cli.run")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command
    try:
        config = None
        if args.config:
            try:
                config = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise GridLearnError(f"cannot read config {args.config}: {exc}", where="cli.config") from exc
            if not isinstance(config, dict):
                raise GridLearnError("config must be a JSON object", where="cli.config")
        opts = resolve(command, vars(args), config)
        t0 = time.perf_counter()
        with _thread_limit():
            summary = execute(command, opts)
        log.info("%s finished in %.2fs", command, time.perf_counter() - t0)
    except GridLearnError as exc:
        print(f"gridlearn {command}: error {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, OverflowError) as exc:
        print(f"gridlearn {command}: error [cli.{command}] {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
