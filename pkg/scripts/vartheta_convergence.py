"""Finite-difference convergence of the derivative of vartheta(D) = D (1 + D^2)^(-1/2).

Prints the fitted log-log slope per instance for a few direction scales, which
shows where rounding in the h = 1e-5 difference starts to flatten the curve.

    python3 scripts/vartheta_convergence.py --instances 5 --n 8
"""

import argparse

import numpy as np

from specflow.doi import VARTHETA, matrix_function, vartheta_derivative
from specflow.operators import random_hermitian

STEPS = np.array([1e-2, 1e-3, 1e-4, 1e-5])


def errors(D, X):
    exact = vartheta_derivative(D, X)
    out = []
    for h in STEPS:
        fd = (matrix_function(D + h * X, VARTHETA) - matrix_function(D - h * X, VARTHETA)) / (2 * h)
        out.append(np.linalg.norm(fd - exact, 2))
    return np.array(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scales", default="1,3,10")
    args = ap.parse_args()
    scales = [float(s) for s in args.scales.split(",")]
    rng = np.random.default_rng(args.seed)
    print("instance  " + "  ".join(f"|X|={s:<5g}" for s in scales))
    for i in range(args.instances):
        D = random_hermitian(rng, args.n, 2.0)
        X = random_hermitian(rng, args.n, 1.0)
        slopes = [np.polyfit(np.log(STEPS), np.log(errors(D, s * X)), 1)[0] for s in scales]
        print(f"{i:8d}  " + "  ".join(f"{v:9.4f}" for v in slopes))


if __name__ == "__main__":
    main()
