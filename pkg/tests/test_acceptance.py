"""End-to-end acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line that is echoed in the pytest terminal
summary, and also prints it (visible with ``-s``). Run on its own with
``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np

from conftest import ACCEPTANCE_LINES, EXAMPLE_B, FOUR_PAIRS, brute_G, brute_nested
from gexpect.gfunction import SupportG, SupportSetTheta
from gexpect.limit_harness import IIDPair, clt_expect, lln_distance_study, perturb
from gexpect.pde_solver import (
    advance,
    build_grid,
    gdist_expect,
    initial_field,
    property_suite,
    solve,
    solve_full,
)
from gexpect.scenario_core import DiscreteUncertainDistribution, expect, product
from gexpect.testfunctions import abs_clipped, quad, random_polyline


def report(num, title, ok, detail):
    line = f"CRITERION {num}: {'PASS' if ok else 'FAIL'} {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def theta4_G():
    return SupportG(SupportSetTheta(1, [([q], [[s]]) for q, s in FOUR_PAIRS]))


def example_b():
    return DiscreteUncertainDistribution(1, EXAMPLE_B[0], EXAMPLE_B[1])


def test_criterion_1_quadratic_exactness():
    G = theta4_G()
    grid = build_grid(G, 6.0, 0.02, 1.0, spatial_dim=2)
    worst, slowest, total = 0.0, 0.0, 0.0
    ok = True
    for A in (2.0, -2.0):
        for p in (0.0, 1.0, -1.0):
            t0 = time.perf_counter()
            val, fld = gdist_expect(quad(A, p, full=True), G, grid, return_field=True)
            dt = time.perf_counter() - t0
            want = brute_G(FOUR_PAIRS, p, A)
            err = abs(val - want)
            ok &= err <= 1e-6 + fld.truncation_error_bound and dt < 10.0
            worst, slowest, total = max(worst, err), max(slowest, dt), total + dt
    report(1, "quadratic exactness", ok,
           f"max |err|={worst:.2e}, slowest call {slowest:.2f}s, all six {total:.2f}s")


def _bridge_errors():
    pair = IIDPair(X=example_b())
    G = pair.g_function()
    grid = build_grid(G, 6.0, 0.02, 1.0)
    rng = np.random.default_rng(20240521)
    corpus = [abs_clipped(5.0), random_polyline(rng), random_polyline(rng)]
    table = []
    for phi in corpus:
        ref = gdist_expect(phi, G, grid)
        table.append([abs(clt_expect(pair, n, phi) - ref) for n in (8, 32, 128)])
    return table


def test_criterion_2_clt_bridge():
    t0 = time.perf_counter()
    table = _bridge_errors()
    elapsed = time.perf_counter() - t0
    final_ok = all(e[-1] <= 1e-2 for e in table)
    mono_ok = all(e[i + 1] <= 1.1 * e[i] for e in table for i in range(2))
    ok = final_ok and mono_ok and elapsed < 60.0
    detail = "; ".join("[" + ", ".join(f"{v:.2e}" for v in e) + "]" for e in table)
    report(2, "CLT bridge", ok, f"errors at n=8,32,128: {detail}; {elapsed:.2f}s")


def test_criterion_3_exact_clt_invariants():
    pair = IIDPair(X=example_b())
    dev = 0.0
    for n in range(1, 7):
        dev = max(dev, abs(clt_expect(pair, n, lambda x: x * x) - 0.8),
                  abs(clt_expect(pair, n, lambda x: -x * x) + 0.2))
    report(3, "exact CLT invariants", dev <= 1e-12, f"max deviation {dev:.1e} over n=1..6")


def lln_count_oracle(n):
    """Worst-case Ê[d(mean, [1, 2])] by dynamic programming over the number of 3s.

    Each draw is 3 with probability 1/3 or 2/3 (chosen adversarially after
    seeing the past), so the state is just the count of 3s so far.
    """
    c = np.arange(n + 1)
    mean = 3.0 * c / n
    v = np.maximum(np.maximum(1.0 - mean, mean - 2.0), 0.0)
    for k in range(n, 0, -1):
        up, stay = v[1:k + 1], v[:k]
        v = np.maximum(up / 3 + 2 * stay / 3, 2 * up / 3 + stay / 3)
    return float(v[0])


def test_criterion_4_lln():
    p = 1 / 3
    Y = DiscreteUncertainDistribution(1, [0.0, 3.0], [[1 - p, p], [p, 1 - p]])
    vals = lln_distance_study(Y, [1, 2, 128]).harness_values
    oracle = lln_count_oracle(128)
    exact_ok = abs(vals[0] - 1.0) <= 1e-12 and abs(vals[1] - 2 / 3) <= 1e-12
    agree = abs(vals[2] - oracle) <= 1e-12
    ok = exact_ok and agree and vals[2] <= 0.05
    report(4, "LLN", ok,
           f"n=1: {vals[0]!r}, n=2: {vals[1]!r}, n=128: {vals[2]:.5f} "
           f"(count-DP oracle {oracle:.5f}, threshold 0.05)")


def test_criterion_5_independence_asymmetry():
    X = example_b()
    f = lambda x, y: x * y * y
    xy = expect(product(X, X), f)
    yx = expect(product(X, X), lambda y, x: f(x, y))
    ox = brute_nested(EXAMPLE_B, EXAMPLE_B, f)
    ok = abs(xy - 0.24) <= 1e-12 and abs(yx) <= 1e-12 and abs(xy - ox) <= 1e-12
    report(5, "independence asymmetry", ok, f"Y after X: {xy!r}, X after Y: {yx!r}")


def test_criterion_6_property_suite():
    res = property_suite(theta4_G(), trials=100, rng=np.random.default_rng(6))
    ok = all(r.passed for r in res.values()) and min(r.trials for r in res.values()) >= 100
    detail = ", ".join(f"{k} {r.failures}/{r.trials} (max {r.max_violation:.1e})"
                       for k, r in res.items())
    report(6, "property suite", ok, detail)


def test_criterion_7_semigroup():
    G = theta4_G()
    grid = build_grid(G, 6.0, 0.02, 1.0, step_multiple=10)
    rng = np.random.default_rng(7)
    worst = 0.0
    for phi in [abs_clipped(3.0)] + [random_polyline(rng) for _ in range(3)]:
        whole = solve(phi, G, 1.0, grid).values
        split = advance(advance(initial_field(phi, grid), G, 0.3), G, 0.7).values
        worst = max(worst, float(np.max(np.abs(whole - split))))
    report(7, "semigroup", worst == 0.0, f"max nodewise |difference| {worst!r} at (0.3, 0.7)")


def test_criterion_8_perturbation():
    base = IIDPair(X=example_b())
    pp = perturb(base, 0.1, m=7)
    shift = pp.pair.g_function()(0.0, 2.0) - base.g_function()(0.0, 2.0)
    shift_ok = abs(shift - 0.01) <= 1e-3
    rng = np.random.default_rng(8)
    corpus = [abs_clipped(5.0), random_polyline(rng)]
    worst_ratio = 0.0
    for phi in corpus:
        bound = pp.perturbation_bound(phi.lipschitz_bound)
        for n in (1, 2, 4, 8, 12):
            diff = abs(clt_expect(base, n, phi) - clt_expect(pp.pair, n, phi))
            worst_ratio = max(worst_ratio, diff / bound)
    ok = shift_ok and worst_ratio <= 1.0
    report(8, "perturbation identity", ok,
           f"shift {shift:.12f}, max |diff|/bound {worst_ratio:.3f} for n in 1..12")


def test_criterion_9_reduction_identity():
    G = theta4_G()
    L, dx = 8.0, 0.05
    full_grid = build_grid(G, L, dx, 1.0, spatial_dim=2)
    red_grid = build_grid(G, 2 * L, dx, 1.0)
    assert red_grid.dt == full_grid.dt
    rng = np.random.default_rng(9)
    worst = 0.0
    bound = 0.0
    for phi in (abs_clipped(2.0), random_polyline(rng)):
        u = solve_full(lambda x, y: phi(x + y), G, 1.0, full_grid).values
        v = solve(phi, G, 1.0, red_grid).values
        x = full_grid.nodes()
        # nodes whose backward characteristics never touch the frozen edges
        inner = np.flatnonzero(np.abs(x) <= L - 4.0)
        # full node i sits at (i - N) dx and reduced node k at (k - 2N) dx, so x + y is k = i + j
        I, J = np.meshgrid(inner, inner, indexing="ij")
        gap = np.abs(u[I, J] - v[I + J])
        values_range = float(np.ptp(phi(x)))
        worst = max(worst, float(gap.max()))
        bound = max(bound, 2 * (dx + full_grid.dt) * values_range)
    report(9, "reduction identity", worst <= bound,
           f"max |u(x,y) - v(x+y)| {worst:.2e} vs bound {bound:.2e}")
