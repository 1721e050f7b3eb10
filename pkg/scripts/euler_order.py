"""Strong convergence of explicit master-equation stepping.

Compares the Euler density with the Bayes-formula density on the same mesh
and innovation path, averaged over paths, and reports the fitted order.
"""

import argparse
import warnings

import numpy as np

from condensity.errors import StabilityWarning
from condensity.filtering import TimeMesh, master_equation_euler, path_noise, run_paths
from condensity.grid import gaussian_density, make_grid
from condensity.vol import Semilinear


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=64)
    ap.add_argument("--finest", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=31)
    args = ap.parse_args()

    f0 = gaussian_density(make_grid(-6, 6, 601), 0.0, 1.0)
    v = Semilinear(0.5, 1.0)
    fine = TimeMesh.uniform(0.5, args.finest)
    X, B = path_noise(f0, fine, args.seed, np.arange(args.paths))
    dts, errs = [], []
    for factor in (256, 64, 16, 4, 1):
        mesh = fine.coarsen(factor)
        out = run_paths(f0, v, mesh, X, B[:, ::factor], snapshots=[-1])
        exact = out["snapshots"][mesh.n_steps]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            e = [np.max(np.abs(master_equation_euler(f0, v, out["W"][p], mesh).values[-1] - exact[p]))
                 for p in range(X.size)]
        dts.append(mesh.max_step)
        errs.append(float(np.mean(e)))
        print(f"dt={mesh.max_step:.2e}  mean sup-norm error {errs[-1]:.4e}")
    print(f"fitted order {np.polyfit(np.log(dts), np.log(errs), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
