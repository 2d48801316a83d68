"""LLN study: distance of the sample mean to the hull of means, exact recursion."""

import argparse
import os

from gexpect.limit_harness import lln_distance_study
from gexpect.scenario_core import DiscreteUncertainDistribution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[1, 2, 8, 32, 128, 512])
    ap.add_argument("--out", default="results/lln.csv")
    args = ap.parse_args()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)

    p = 1 / 3
    Y = DiscreteUncertainDistribution(1, [0.0, 3.0], [[1 - p, p], [p, 1 - p]])
    rep = lln_distance_study(Y, args.n)
    rep.write(args.out)
    for n, v in zip(rep.n_values, rep.harness_values):
        print(f"n={n:<5d} E[d(mean, [1,2])] = {v:.6f}   sqrt(n)*value = {v * n ** 0.5:.4f}")


if __name__ == "__main__":
    main()
