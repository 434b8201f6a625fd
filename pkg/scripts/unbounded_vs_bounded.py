"""Unbounded formula on D_t versus the bounded formula on vartheta(D_t).

For each random quadratic path prints the crossing count, the gaussian and
resolvent totals, and the bounded total for the transformed path with the
pulled-back weight.

    python3 scripts/unbounded_vs_bounded.py --paths 3 --n 16
"""

import argparse

from specflow.flow import sf_crossing, sf_integral_bounded, sf_integral_unbounded
from specflow.paths import make_random_quadratic_path, vartheta_path
from specflow.weights import GaussianWeight, PullbackWeight, ResolventWeight


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=3)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--headroom", type=float, default=4.0)
    ap.add_argument("--quad-tol", type=float, default=1e-9)
    args = ap.parse_args()
    g, r = GaussianWeight(1.0), ResolventWeight(2.0, "half_shift")
    print("seed  crossing  gaussian          resolvent         bounded(vartheta)")
    for k in range(args.paths):
        D = make_random_quadratic_path(args.seed + k, args.n, headroom=args.headroom)
        tg = sf_integral_unbounded(D, g, args.quad_tol).total
        tr = sf_integral_unbounded(D, r, args.quad_tol).total
        tb = sf_integral_bounded(vartheta_path(D), PullbackWeight(g), args.quad_tol).total
        print(f"{args.seed + k:4d}  {sf_crossing(D):+8d}  {tg:+.12f}  {tr:+.12f}  {tb:+.12f}")


if __name__ == "__main__":
    main()
