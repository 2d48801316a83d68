"""CLT convergence study: backward-induction harness against the G-heat solver.

Writes one CSV (plus JSON sidecar) per test function in the corpus and prints
a short table of errors and the fitted rate.
"""

import argparse
import math
import os

import numpy as np

from gexpect.limit_harness import IIDPair, clt_convergence_study, clt_expect
from gexpect.pde_solver import build_grid
from gexpect.scenario_core import DiscreteUncertainDistribution
from gexpect.testfunctions import abs_clipped, indicator_smooth, random_polyline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[8, 32, 128])
    ap.add_argument("--dx", type=float, default=0.02)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/clt")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    X = DiscreteUncertainDistribution(1, [-1.0, 0.0, 1.0], [[0.1, 0.8, 0.1], [0.4, 0.2, 0.4]])
    pair = IIDPair(X=X)
    grid = build_grid(pair.g_function(), 6.0, args.dx, 1.0)
    rng = np.random.default_rng(args.seed)
    corpus = {"abs_clipped": abs_clipped(5.0), "bump": indicator_smooth(-0.5, 0.5),
              "polyline_a": random_polyline(rng), "polyline_b": random_polyline(rng)}

    print(f"{'phi':<12} {'reference':>10} " + " ".join(f"{'n=' + str(n):>10}" for n in args.n)
          + f" {'alpha':>7}")
    for name, phi in corpus.items():
        rep = clt_convergence_study(pair, phi, args.n, grid)
        rep.write(os.path.join(args.out, f"{name}.csv"))
        alpha = "nan" if math.isnan(rep.alpha_fit) else f"{rep.alpha_fit:.2f}"
        print(f"{name:<12} {rep.pde_reference:>10.6f} "
              + " ".join(f"{e:>10.2e}" for e in rep.abs_errors) + f" {alpha:>7}")
    compare_joint_modes(X, args.n)


def compare_joint_modes(X, n_list):
    """Same marginals, two within-step dependence models; equality is not asserted."""
    Y = DiscreteUncertainDistribution(1, [-0.5, 0.5], [[0.7, 0.3], [0.3, 0.7]])
    support = [[x, y] for x in X.support[:, 0] for y in Y.support[:, 0]]
    credal = [np.outer(px, py).ravel() for px in X.credal for py in Y.credal]
    joint = DiscreteUncertainDistribution(2, support, credal)
    marginal = IIDPair(X=X, Y=Y)
    joint_pair = IIDPair(joint_mode="joint_credal", joint=joint)
    phi = indicator_smooth(-0.25, 0.75)
    print("\njoint_mode comparison, phi = indicator_smooth:-0.25:0.75")
    for n in n_list:
        a, b = clt_expect(marginal, n, phi), clt_expect(joint_pair, n, phi)
        print(f"  n={n:<4d} marginal_product {a:.6f}  joint_credal {b:.6f}  diff {a - b:+.2e}")


if __name__ == "__main__":
    main()
