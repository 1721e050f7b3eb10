"""Filter density vs bridge density on shared noise under mesh halving.

Prints the sup-norm gap at the end time for each step size, the observed
order between successive halvings, and the gap predicted from the exponent
slope c_k (the left-endpoint drift-sum error).
"""

import argparse

import numpy as np

from condensity.bridge import bachelier_prior, drift_sum_gap, equivalence_check
from condensity.filtering import TimeMesh, path_noise
from condensity.grid import make_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--finest", type=int, default=5000, help="steps on the finest mesh")
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--seeds", type=int, nargs="+", default=[3, 5, 8])
    ap.add_argument("--sigma", type=float, default=1.0)
    args = ap.parse_args()

    T = 1.0
    grid = make_grid(-8, 8, 2001)
    f0 = bachelier_prior(grid, args.sigma, T)
    fine = TimeMesh.uniform(args.t_end, args.finest)
    factors = [2**j for j in range(args.levels - 1, -1, -1)]
    print(f"{'seed':>4} {'dt':>10} {'sup-norm':>12} {'|c_k|':>12} {'order':>9}")
    for s in args.seeds:
        X, B = path_noise(f0, fine, s, 0)
        prev = None
        for f in factors:
            mesh = fine.coarsen(f)
            rep = equivalence_check(f0, args.sigma, T, B[0, ::f], float(X[0]), mesh, report_indices=[mesh.n_steps])
            gap = abs(drift_sum_gap(float(X[0]), args.sigma, T, mesh)[-1])
            sup = rep.sup_norm[0]
            order = "" if prev is None else f"{np.log2(prev / sup):.5f}"
            print(f"{s:>4} {mesh.max_step:>10.2e} {sup:>12.4e} {gap:>12.4e} {order:>9}")
            prev = sup


if __name__ == "__main__":
    main()
