"""Integral-formula totals of one random path under several weights.

Every admissible weight should give the same total, equal to the discrete
spectral flow; the spread column is the largest deviation from it.

    python3 scripts/weight_independence.py --paths 5 --n 6
"""

import argparse

from specflow.flow import sf_integral_bounded
from specflow.paths import make_trig_path
from specflow.weights import BumpWeight

WEIGHTS = [BumpWeight(0.9, 2), BumpWeight(0.5, 2), BumpWeight(0.5, 4), BumpWeight(0.2, 3), BumpWeight(0.05, 2)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=5)
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--quad-tol", type=float, default=1e-10)
    args = ap.parse_args()
    header = "  ".join(f"bump({w.delta},{w.m})" for w in WEIGHTS)
    print(f"seed  sf  {header}  spread")
    for k in range(args.paths):
        path = make_trig_path(args.seed + k, args.n)
        reports = [sf_integral_bounded(path, w, args.quad_tol) for w in WEIGHTS]
        sf = reports[0].sf_crossing
        spread = max(abs(r.total - sf) for r in reports)
        cells = "  ".join(f"{r.total:+.10f}" for r in reports)
        print(f"{args.seed + k:4d}  {sf:+d}  {cells}  {spread:.2e}")


if __name__ == "__main__":
    main()
