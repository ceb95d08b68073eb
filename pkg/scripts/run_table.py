"""Spectrum and resistance preservation on generated meshes, SGL against SF-SGL."""

import argparse
import time

from gridlearn.initgraph import build_pool
from gridlearn.measurements import generate_gaussian
from gridlearn.meshes import gen_mesh
from gridlearn.metrics import compute_metrics
from gridlearn.multilevel import sf_sgl_learn
from gridlearn.sgl import sgl_learn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sides", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--m", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'mesh':>9} {'method':>7} {'Err(lam)':>9} {'Err(R)':>8} {'density':>8} {'time':>7}")
    for side in args.sides:
        g = gen_mesh("grid2d", (side, side))
        ms = generate_gaussian(g, args.m, seed=args.seed)
        for name, learn in (("sgl", sgl_learn), ("sf-sgl", sf_sgl_learn)):
            t0 = time.perf_counter()
            learned, _ = learn(ms, build_pool(ms.X))
            elapsed = time.perf_counter() - t0
            rep = compute_metrics(g, learned, seed=args.seed)
            print(f"{side:>4}x{side:<4} {name:>7} {rep.err_lambda:9.3f} {rep.err_resistance:8.3f} "
                  f"{rep.density_learned:8.3f} {elapsed:6.1f}s")


if __name__ == "__main__":
    main()
