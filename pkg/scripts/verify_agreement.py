"""Worst-case voltages on a learned grid against the original grid."""

import argparse

import numpy as np

from gridlearn.initgraph import build_pool
from gridlearn.measurements import generate_gaussian
from gridlearn.meshes import gen_mesh
from gridlearn.multilevel import sf_sgl_learn
from gridlearn.sgl import sgl_learn
from gridlearn.verify import VerificationProblem, synthetic_problem, verify


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--side", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--method", choices=["sgl", "sf-sgl"], default="sf-sgl")
    args = ap.parse_args()

    g = gen_mesh("grid2d", (args.side, args.side))
    ms = generate_gaussian(g, 50, seed=args.seed)
    learn = sf_sgl_learn if args.method == "sf-sgl" else sgl_learn
    learned, _ = learn(ms, build_pool(ms.X))
    prob = synthetic_problem(g, seed=args.seed)
    ref = verify(prob)
    mine = verify(VerificationProblem(learned, prob.ground_nodes, prob.constraints, prob.query_nodes))
    ratio = mine.values / ref.values
    print(f"queries {ratio.size}, mean rel. err {np.mean(np.abs(ratio - 1)):.1%}, "
          f"median ratio {np.median(ratio):.2f}, range [{ratio.min():.2f}, {ratio.max():.2f}]")
    print(f"original: factor {ref.factor_time:.3f}s, solves {ref.solve_times.sum():.3f}s, "
          f"lp {ref.lp_times.sum():.3f}s")


if __name__ == "__main__":
    main()
