"""Closed-form binary-prior call prices against the Monte Carlo oracle.

For each (K, V) the oracle simulates the filter with narrow-Gaussian atoms of
width w and w/2 on common random numbers and extrapolates to w = 0.
"""

import argparse
import math

from condensity.pricing import BinaryModel, binary_call_closed_form
from condensity.runner import binary_oracle
from condensity.vol import ConstantInTime


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--width", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--q1", type=float, default=0.5)
    args = ap.parse_args()

    print(f"{'K':>5} {'V':>5} {'closed form':>12} {'oracle':>12} {'se':>9} {'z':>6}")
    for K in (0.2, 0.5, 0.8):
        for V in (0.25, 1.0, 4.0):
            m = BinaryModel(0.0, 1.0, args.q1, 1 - args.q1, ConstantInTime.linear(math.sqrt(V)))
            cf = binary_call_closed_form(m, K, 0.0, 1.0)
            est, se = binary_oracle(m, K, 1.0, args.paths, args.seed, args.width)
            print(f"{K:>5} {V:>5} {cf:>12.6f} {est:>12.6f} {se:>9.2e} {(est - cf) / se:>+6.2f}")


if __name__ == "__main__":
    main()
