"""Effect of measurement noise on the learned spectrum."""

import argparse

import numpy as np

from gridlearn.graph import build_laplacian
from gridlearn.initgraph import build_pool
from gridlearn.kernels import EigenConfig, eigen_pairs
from gridlearn.measurements import add_noise, generate_gaussian
from gridlearn.meshes import gen_mesh
from gridlearn.metrics import compute_metrics, mean_relative_error
from gridlearn.sgl import sgl_learn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--side", type=int, default=32)
    ap.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.1, 0.3, 0.5])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    g = gen_mesh("grid2d", (args.side, args.side))
    lam_true, _ = eigen_pairs(build_laplacian(g), EigenConfig(5))
    print(f"{'zeta':>5} {'Err(lam) 50':>12} {'Err(lam) 5':>11}")
    for zeta in args.levels:
        wide, low = [], []
        for seed in range(args.seeds):
            ms = add_noise(generate_gaussian(g, 50, seed=seed), zeta, seed=seed)
            learned, _ = sgl_learn(ms, build_pool(ms.X))
            wide.append(compute_metrics(g, learned, seed=seed).err_lambda)
            lam, _ = eigen_pairs(build_laplacian(learned), EigenConfig(5))
            low.append(mean_relative_error(lam, lam_true))
        print(f"{zeta:5.2f} {np.median(wide):12.3f} {np.median(low):11.3f}")


if __name__ == "__main__":
    main()
