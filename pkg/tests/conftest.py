import math

import pytest

from gexpect.gfunction import SupportG, SupportSetTheta
from gexpect.scenario_core import DiscreteUncertainDistribution


def brute_leaf(support, credal, f):
    """max over credal vectors of sum p_j f(x_j), plain Python."""
    return max(sum(p * f(x) for p, x in zip(row, support)) for row in credal)


def brute_nested(outer, inner, f):
    """Ê[f(x, y)] with y independent to x: inner expectation first."""
    return brute_leaf(outer[0], outer[1], lambda x: brute_leaf(inner[0], inner[1], lambda y: f(x, y)))


def brute_iid(support, credal, n, f):
    """Ê[f(x_1..x_n)] for n copies, each later copy independent to the earlier ones."""
    def rec(prefix):
        if len(prefix) == n:
            return f(prefix)
        return brute_leaf(support, credal, lambda x: rec(prefix + [x]))
    return rec([])


EXAMPLE_A = ([-1.0, 1.0], [[0.7, 0.3], [0.5, 0.5], [0.3, 0.7]])
EXAMPLE_B = ([-1.0, 0.0, 1.0], [[0.1, 0.8, 0.1], [0.4, 0.2, 0.4]])
LLN_Y = ([0.0, 3.0], [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])


def dist(example):
    return DiscreteUncertainDistribution(1, example[0], example[1])


@pytest.fixture
def example_a():
    return dist(EXAMPLE_A)


@pytest.fixture
def example_b():
    return dist(EXAMPLE_B)


@pytest.fixture
def lln_y():
    # second row is renormalised so the vector sums to one in floating point
    p = 1 / 3
    return DiscreteUncertainDistribution(1, [0.0, 3.0], [[1 - p, p], [p, 1 - p]])


def four_pair_theta():
    pairs = [(q, math.sqrt(s)) for q in (1.0, 2.0) for s in (0.2, 0.8)]
    return SupportSetTheta(1, [([q], [[sig]]) for q, sig in pairs])


@pytest.fixture
def theta4():
    return four_pair_theta()


@pytest.fixture
def G4(theta4):
    return SupportG(theta4)


def brute_G(pairs, p, A):
    return max(0.5 * A * sig * sig + p * q for q, sig in pairs)


FOUR_PAIRS = [(q, math.sqrt(s)) for q in (1.0, 2.0) for s in (0.2, 0.8)]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
