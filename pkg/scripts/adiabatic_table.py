"""Adiabatic sweep: how fast transport with a scaled form part approaches
the plain-connection transport.

Builds a random rank 1|1 problem over a 2-dimensional chart, scales the
form part by sqrt(lambda) for lambda = 1, 1/2, ..., and prints the distance
table with successive ratios (the expected rate is sqrt(2) per halving).
"""

import argparse

import numpy as np

from supertransport import GrassmannElement, SuperPoint, adiabatic_sweep
from supertransport.verify import random_path, random_superconnection


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--levels", type=int, default=7)
    parser.add_argument("--steps", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    n = 2
    sc = random_superconnection(rng, 2, (1, 1))
    path = random_path(rng, n, 2)
    end = SuperPoint(GrassmannElement.scalar(n, 1.0),
                     GrassmannElement.generator(n, 1) * 0.5)
    lambdas = [2.0 ** -k for k in range(args.levels)]
    entries, _ = adiabatic_sweep(path, sc, lambdas, end, steps=args.steps)

    print(f"seed={args.seed}  steps={args.steps}")
    print("lambda        |SP_lambda - SP_0|    ratio")
    prev = None
    for e in entries:
        ratio = "" if prev is None else f"{prev / e.distance_to_limit:6.3f}"
        print(f"{e.lam:<12.6g}  {e.distance_to_limit:.6e}        {ratio}")
        prev = e.distance_to_limit


if __name__ == "__main__":
    main()
