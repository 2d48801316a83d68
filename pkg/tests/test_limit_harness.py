import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EXAMPLE_B, LLN_Y, brute_iid
from gexpect.errors import DomainError, InvariantError, ResourceBudgetError
from gexpect.gfunction import check_ellipticity
from gexpect.limit_harness import (
    IIDPair,
    clt_convergence_study,
    clt_expect,
    fit_rate,
    gaussian_nodes,
    lln_distance_study,
    perturb,
    uniform_moment_check,
)
from gexpect.pde_solver import build_grid
from gexpect.scenario_core import DiscreteUncertainDistribution, expect, iid_sequence, product
from gexpect.testfunctions import TestFunction, abs_clipped


def lln_oracle(n):
    """Ê[d(mean of n copies, [1, 2])] by plain nested enumeration."""
    dist_fn = lambda xs: max(1 - sum(xs) / n, sum(xs) / n - 2, 0.0)
    return brute_iid(*LLN_Y, n, dist_fn)


@pytest.mark.parametrize("n", range(1, 7))
def test_quadratic_invariants(example_b, n):
    pair = IIDPair(X=example_b)
    assert abs(clt_expect(pair, n, lambda x: x * x) - 0.8) <= 1e-12
    assert abs(clt_expect(pair, n, lambda x: -x * x) + 0.2) <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_quadratic_matches_enumeration(n):
    f = lambda xs: sum(xs) ** 2 / n
    assert brute_iid(*EXAMPLE_B, n, f) == pytest.approx(0.8, abs=1e-12)


def test_n_equal_one_is_definition(example_b):
    Y = DiscreteUncertainDistribution(1, [1.0, 2.0], [[1, 0], [0, 1]])
    pair = IIDPair(X=example_b, Y=Y)
    phi = abs_clipped(0.7)
    want = expect(product(example_b, Y), lambda x, y: float(phi(x + y)))
    assert clt_expect(pair, 1, phi) == pytest.approx(want, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_agrees_with_iid_sequence(example_b, n):
    phi = lambda s: np.sin(3 * s) + np.abs(s - 0.1)
    pair = IIDPair(X=example_b)
    want = expect(iid_sequence(example_b, n),
                  TestFunction(lambda *xs: phi(sum(xs) / math.sqrt(n)), arity=n))
    assert clt_expect(pair, n, phi) == pytest.approx(want, abs=1e-12)


def test_irrational_supports_use_merge_path():
    s = math.sqrt(2)
    X = DiscreteUncertainDistribution(1, [-s, 0.0, s], [[0.25, 0.5, 0.25], [0.1, 0.8, 0.1]])
    Y = DiscreteUncertainDistribution(1, [math.pi / 10, 0.5], [[1, 0], [0, 1]])
    pair = IIDPair(X=X, Y=Y)
    phi = np.cos
    for n in (1, 2, 3):
        tree = iid_sequence(product(X, Y), n)
        want = expect(tree, TestFunction(
            lambda *z: phi(sum(z[0::2]) / math.sqrt(n) + sum(z[1::2]) / n), arity=2 * n))
        assert clt_expect(pair, n, phi) == pytest.approx(want, abs=1e-12)


def test_x_must_be_mean_certain(example_a):
    with pytest.raises(InvariantError):
        IIDPair(X=example_a)


def test_budget_error_suggests_smaller_n():
    s = math.sqrt(2)
    X = DiscreteUncertainDistribution(1, [-1.0, 0.0, 1.0], [[0.25, 0.5, 0.25]])
    Y = DiscreteUncertainDistribution(1, [0.0, s, math.pi], [[1, 0, 0], [0, 0, 1]])
    with pytest.raises(ResourceBudgetError, match="n"):
        clt_expect(IIDPair(X=X, Y=Y), 64, lambda z: z, budget=10_000)


@pytest.mark.parametrize("n, want", [(1, 1.0), (2, 2 / 3)])
def test_lln_small_n(lln_y, n, want):
    rep = lln_distance_study(lln_y, [n])
    assert rep.harness_values[0] == pytest.approx(want, abs=1e-12)
    assert lln_oracle(n) == pytest.approx(want, abs=1e-12)


def test_lln_matches_oracle_and_decreases(lln_y):
    ns = [1, 2, 3, 4, 6, 8]
    vals = lln_distance_study(lln_y, ns).harness_values
    for n, v in zip(ns, vals):
        assert v == pytest.approx(lln_oracle(n), abs=1e-12)
        assert 0 <= v <= 3.0
    assert vals[-1] < vals[0]


def test_lln_classical_and_inside_hull():
    Y = DiscreteUncertainDistribution(1, [0.0, 2.0], [[0.5, 0.5]])
    assert lln_distance_study(Y, [1]).harness_values[0] == pytest.approx(1.0)
    inside = DiscreteUncertainDistribution(1, [1.0, 2.0], [[1, 0], [0, 1]])
    assert lln_distance_study(inside, [1, 5, 9]).harness_values == [0.0, 0.0, 0.0]


def test_gaussian_nodes():
    eta = gaussian_nodes(7)
    w, x = eta.credal[0], eta.support[:, 0]
    assert abs(w @ x) <= 1e-15
    assert w @ x**2 == pytest.approx(1.0, abs=1e-12)
    assert 0.0 in x
    for m in (4, 1):
        with pytest.raises(DomainError):
            gaussian_nodes(m)


def test_perturbation_moment_identity(example_b):
    base = IIDPair(X=example_b)
    pp = perturb(base, 0.1, m=7)
    G, Ge = base.g_function(), pp.pair.g_function()
    assert Ge(0.0, 2.0) - G(0.0, 2.0) == pytest.approx(0.01, abs=1e-12)
    assert Ge(0.0, -2.0) - G(0.0, -2.0) == pytest.approx(-0.01, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_perturbation_bound(example_b, n):
    base = IIDPair(X=example_b)
    pp = perturb(base, 0.1, m=7)
    phi = abs_clipped(5.0)
    diff = abs(clt_expect(base, n, phi) - clt_expect(pp.pair, n, phi))
    assert diff <= pp.perturbation_bound(1.0)


def test_perturbed_pair_is_elliptic(example_b):
    pp = perturb(IIDPair(X=example_b), 0.1)
    assert check_ellipticity(pp.pair.g_function(), 0.2)


def test_moment_check(example_b):
    pair = IIDPair(X=example_b)
    assert uniform_moment_check(pair, 2, [1, 4, 16]) == pytest.approx(0.8, abs=1e-12)
    assert uniform_moment_check(pair, 1, [1, 4, 16]) <= math.sqrt(0.8) + 1e-12
    assert uniform_moment_check(IIDPair(), 3, [1, 7]) == 0.0


def test_joint_credal_mode():
    joint = DiscreteUncertainDistribution(
        2, [[-1, 1], [1, 1], [-1, 2], [1, 2]],
        [[0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5], [0.25, 0.25, 0.25, 0.25]])
    pair = IIDPair(joint_mode="joint_credal", joint=joint)
    assert clt_expect(pair, 1, lambda z: z) == pytest.approx(2.0)
    assert clt_expect(pair, 3, lambda z: -z) == pytest.approx(-1.0)
    with pytest.raises(Exception):
        IIDPair(joint_mode="joint_credal")


def test_fit_rate_recovers_exponent():
    ns = [8, 32, 128]
    alpha, C = fit_rate(ns, [3.0 * n ** -0.5 for n in ns])
    assert alpha == pytest.approx(1.0)
    assert C == pytest.approx(3.0)


def test_convergence_report_files(tmp_path, example_b):
    pair = IIDPair(X=example_b)
    grid = build_grid(pair.g_function(), 6.0, 0.05, 1.0)
    rep = clt_convergence_study(pair, abs_clipped(5.0), (4, 16), grid)
    out = tmp_path / "clt.csv"
    rep.write(out)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["n", "harness", "reference", "abs_error"]
    assert [r[0] for r in rows[1:]] == ["4", "16"]
    side = json.load(open(str(out) + ".json"))
    assert {"alpha_fit", "C", "moment_bound", "joint_mode"} <= set(side)
    assert side["joint_mode"] == "marginal_product"
    assert side["moment_bound"] == pytest.approx(0.8)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=3, max_size=3).filter(lambda w: w[0] + w[2] > 0),
       st.integers(1, 5))
def test_symmetric_x_quadratic_is_upper_variance(w, n):
    # symmetric X has zero mean under every vector, so Ê[S_n^2] is its largest variance
    a, b = w[0] + w[2], w[1]
    p = np.array([a / 2, b, a / 2]) / (a + b)
    q = np.array([0.5, 0.0, 0.5])
    X = DiscreteUncertainDistribution(1, [-1.0, 0.0, 1.0], [p, q])
    got = clt_expect(IIDPair(X=X), n, lambda x: x * x)
    assert got == pytest.approx(1.0, abs=1e-12)
