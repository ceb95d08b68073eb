"""Wall time of multilevel learning against mesh size, with the fitted log-log slope."""

import argparse
import time

import numpy as np

from gridlearn.initgraph import build_pool
from gridlearn.measurements import generate_gaussian
from gridlearn.meshes import gen_mesh
from gridlearn.multilevel import sf_sgl_learn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sides", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeats", type=int, default=2)
    args = ap.parse_args()

    # compile the smoother before timing anything
    warm = generate_gaussian(gen_mesh("grid2d", (8, 8)), 5)
    sf_sgl_learn(warm, build_pool(warm.X))

    sizes, times = [], []
    for side in args.sides:
        g = gen_mesh("grid2d", (side, side))
        ms = generate_gaussian(g, 50, seed=0)
        best = np.inf
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            learned, report = sf_sgl_learn(ms, build_pool(ms.X))
            best = min(best, time.perf_counter() - t0)
        sizes.append(g.node_count)
        times.append(best)
        print(f"N={g.node_count:>7}  levels={len(report.levels)}  time={best:.2f}s")
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    print(f"log-log slope {slope:.2f}")


if __name__ == "__main__":
    main()
