"""Density -> call prices -> recovered density, across strike steps.

Shows the L-inf error, the observed order per halving, and the mass lost to
the finite strike range (which sets a floor once the step is small).
"""

import argparse
import math

from condensity.selftest import bl_roundtrip


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    ap.add_argument("--range", type=float, default=4.0, help="strikes run over [-range, range]")
    args = ap.parse_args()

    prev = None
    print(f"{'step':>7} {'L-inf':>10} {'order':>7} {'outside mass':>13} {'flagged':>8}")
    for s in args.steps:
        r = bl_roundtrip(s, -args.range, args.range)
        order = "" if prev is None else f"{math.log2(prev[1] / r['linf']) / math.log2(prev[0] / s):.2f}"
        print(f"{s:>7} {r['linf']:>10.3e} {order:>7} {r['outside_mass']:>13.2e} {str(r['flagged']):>8}")
        prev = (s, r["linf"])


if __name__ == "__main__":
    main()
