"""Discrete property suite of the explicit solver on a few support sets."""

import argparse
import math

import numpy as np

from gexpect.gfunction import SupportG, SupportSetTheta
from gexpect.pde_solver import property_suite


def theta(pairs):
    return SupportG(SupportSetTheta(1, [([q], [[math.sqrt(s)]]) for q, s in pairs]))


CASES = {
    "classical heat": theta([(0.0, 1.0)]),
    "volatility only": theta([(0.0, 0.2), (0.0, 0.8)]),
    "drift and volatility": theta([(q, s) for q in (1.0, 2.0) for s in (0.2, 0.8)]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    failed = False
    for name, G in CASES.items():
        res = property_suite(G, args.trials, np.random.default_rng(args.seed))
        print(name)
        for r in res.values():
            status = "PASS" if r.passed else "FAIL"
            print(f"  {r.name:<22} {status}  {r.failures}/{r.trials}  max {r.max_violation:.2e}")
            failed |= not r.passed
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
