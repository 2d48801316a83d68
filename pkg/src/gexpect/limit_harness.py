"""Exact backward induction for normalized sums and CLT/LLN studies.

For S_n = sum_i (X_i / sqrt(n) + Y_i / n) with (X_{i+1}, Y_{i+1}) independent
to the history, Ê[phi(S_n)] is computed by

    phi_n = phi,  phi_{k-1}(s) = Ê[phi_k(s + X/sqrt(n) + Y/n)],  value = phi_0(0)

over the set of reachable partial sums. When all increments are integer
multiples of a common step the states live on an integer lattice; otherwise
they are merged at a 1e-12 key tolerance.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, InvariantError, ResourceBudgetError
from .gfunction import InducedG, check_ellipticity, g_from_distribution, hull_interval
from .pde_solver import Grid, _atomic_write, build_grid, gdist_expect
from .scenario_core import (
    DiscreteUncertainDistribution,
    Leaf,
    Product,
    expect_batch,
    leaves,
)
from .testfunctions import TestFunction, as_test_function, distance_to_interval, truncate_for_domain

STATE_BUDGET = 5_000_000
MERGE_TOL = 1e-12
MEAN_TOL = 1e-10
DEFAULT_N_LIST = (8, 32, 128)
JOINT_MODES = ("marginal_product", "joint_credal")


@dataclass(frozen=True, eq=False)
class IIDPair:
    """Per-step law of (X_i, Y_i).

    In ``marginal_product`` mode Y is independent to X inside a step; in
    ``joint_credal`` mode ``joint`` is a distribution on R^2 whose first
    coordinate is X and second is Y.
    """

    X: Optional[DiscreteUncertainDistribution] = None
    Y: Optional[DiscreteUncertainDistribution] = None
    joint_mode: str = "marginal_product"
    joint: Optional[DiscreteUncertainDistribution] = None
    check_mean: bool = True

    def __post_init__(self):
        if self.joint_mode not in JOINT_MODES:
            raise DomainError(f"joint_mode must be one of {JOINT_MODES}")
        if self.joint_mode == "joint_credal":
            if self.joint is None or self.joint.dim != 2:
                raise DimensionError("joint_credal mode needs a joint distribution on R^2")
        else:
            X = self.X if self.X is not None else DiscreteUncertainDistribution.deterministic(0.0)
            Y = self.Y if self.Y is not None else DiscreteUncertainDistribution.deterministic(0.0)
            if X.dim != 1 or Y.dim != 1:
                raise DimensionError("the harness handles one-dimensional X and Y")
            object.__setattr__(self, "X", X)
            object.__setattr__(self, "Y", Y)
        if self.check_mean:
            up, lo = self.x_mean_bounds()
            if abs(up) > MEAN_TOL or abs(lo) > MEAN_TOL:
                raise InvariantError(
                    f"X must have no mean uncertainty around 0: Ê[X]={up}, -Ê[-X]={lo}"
                )

    def step_tree(self):
        if self.joint_mode == "joint_credal":
            return Leaf(self.joint)
        return Product(Leaf(self.X), Leaf(self.Y))

    def x_mean_bounds(self):
        tree = self.step_tree()
        up = float(expect_batch(tree, lambda z: z[0]))
        lo = -float(expect_batch(tree, lambda z: -z[0]))
        return up, lo

    def g_function(self) -> InducedG:
        if self.joint_mode == "joint_credal":
            return g_from_distribution(None, joint=self.joint)
        return g_from_distribution(self.X, self.Y)

    def abs_moment_bound(self) -> float:
        return float(expect_batch(self.step_tree(), lambda z: abs(z[0]) + abs(z[1])))


def increment(z, n: int) -> float:
    return z[0] / math.sqrt(n) + z[1] / n


def _step_increments(pair: IIDPair, n: int) -> np.ndarray:
    pts = [np.asarray(d.support[:, 0]) for d in leaves(pair.step_tree())]
    if pair.joint_mode == "joint_credal":
        sup = pair.joint.support
        return np.unique([increment(z, n) for z in sup])
    return np.unique([increment((x, y), n) for x in pts[0] for y in pts[1]])


def _lattice_step(incs: np.ndarray) -> Optional[float]:
    nz = np.abs(incs[np.abs(incs) > 0])
    if nz.size == 0:
        return 1.0
    h = float(nz.min())
    ratios = incs / h
    if np.all(np.abs(ratios - np.round(ratios)) < 1e-9):
        return h
    return None


def _merge(values: np.ndarray, tol: float) -> np.ndarray:
    v = np.sort(values)
    if v.size == 0:
        return v
    keep = np.concatenate([[True], np.diff(v) > tol * np.maximum(1.0, np.abs(v[1:]))])
    return v[keep]


def _lookup(level: np.ndarray, targets: np.ndarray, tol: float) -> np.ndarray:
    idx = np.searchsorted(level, targets)
    idx = np.clip(idx, 0, len(level) - 1)
    left = np.clip(idx - 1, 0, len(level) - 1)
    use_left = np.abs(level[left] - targets) < np.abs(level[idx] - targets)
    idx = np.where(use_left, left, idx)
    err = np.abs(level[idx] - targets)
    if np.any(err > 10 * tol * np.maximum(1.0, np.abs(targets))):
        raise InvariantError("partial-sum lookup failed; states were not merged consistently")
    return idx


def clt_expect(pair: IIDPair, n: int, phi, budget: int = STATE_BUDGET) -> float:
    """Exact Ê[phi(S_n)] by backward induction over reachable partial sums."""
    if n < 1:
        raise DomainError("n must be a positive integer")
    phi = as_test_function(phi, 1)
    tree = pair.step_tree()
    incs = _step_increments(pair, n)
    h = _lattice_step(incs)

    if h is not None:
        m = np.round(incs / h).astype(np.int64)
        lo, hi = int(m.min()), int(m.max())
        width = (hi - lo) * n + 1
        if width > budget:
            raise ResourceBudgetError(
                f"{width} lattice states exceed the budget {budget}; "
                f"use n <= {max(1, (budget - 1) // max(1, hi - lo))}"
            )
        # level k holds integers k*lo .. k*hi
        states = np.arange(n * lo, n * hi + 1, dtype=np.int64)
        vals = np.asarray(phi(states * h), dtype=float) * np.ones(len(states))
        for k in range(n, 0, -1):
            prev = np.arange((k - 1) * lo, (k - 1) * hi + 1, dtype=np.int64)
            base = prev - k * lo

            def F(z, vals=vals, base=base):
                return vals[base + int(round(increment(z, n) / h))]

            vals = expect_batch(tree, F)
        return float(vals[0])

    levels: List[np.ndarray] = [np.zeros(1)]
    for k in range(1, n + 1):
        nxt = _merge((levels[-1][:, None] + incs[None, :]).ravel(), MERGE_TOL)
        if len(nxt) > budget:
            raise ResourceBudgetError(
                f"{len(nxt)} reachable states at step {k} exceed the budget {budget}; "
                f"use n <= {k - 1} or a smaller support"
            )
        levels.append(nxt)
    vals = np.asarray(phi(levels[n]), dtype=float) * np.ones(len(levels[n]))
    for k in range(n, 0, -1):
        prev, cur = levels[k - 1], levels[k]

        def F(z, vals=vals, prev=prev, cur=cur):
            return vals[_lookup(cur, prev + increment(z, n), MERGE_TOL)]

        vals = expect_batch(tree, F)
    return float(vals[0])


@dataclass
class ConvergenceReport:
    n_values: List[int]
    harness_values: List[float]
    pde_reference: float
    abs_errors: List[float] = field(default_factory=list)
    alpha_fit: float = math.nan
    C: float = math.nan
    moment_bound: float = math.nan
    holder_alpha: float = 1.0
    joint_mode: str = "marginal_product"
    corpus: str = ""
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.n_values) != len(self.harness_values):
            raise InvariantError("n_values and harness_values lengths differ")
        if not self.abs_errors:
            self.abs_errors = [abs(v - self.pde_reference) for v in self.harness_values]
        if math.isnan(self.alpha_fit):
            self.alpha_fit, self.C = fit_rate(self.n_values, self.abs_errors)

    def rows(self):
        return list(zip(self.n_values, self.harness_values,
                        [self.pde_reference] * len(self.n_values), self.abs_errors))

    def sidecar(self) -> dict:
        def num(v):
            return None if v is None or not math.isfinite(v) else float(v)

        return {"alpha_fit": num(self.alpha_fit), "C": num(self.C),
                "moment_bound": num(self.moment_bound),
                "joint_mode": self.joint_mode, "holder_alpha": self.holder_alpha,
                "corpus": self.corpus, "notes": self.notes}

    def write(self, path, sidecar_path=None) -> None:
        def body(fh):
            w = csv.writer(fh)
            w.writerow(["n", "harness", "reference", "abs_error"])
            for n, hv, ref, err in self.rows():
                w.writerow([n, repr(float(hv)), repr(float(ref)), repr(float(err))])

        _atomic_write(path, body)
        sidecar_path = sidecar_path or os.fspath(path) + ".json"
        _atomic_write(sidecar_path, lambda fh: json.dump(self.sidecar(), fh, indent=2))


def fit_rate(n_values: Sequence[int], errors: Sequence[float]):
    """Fit err ~ C n^(-alpha/2) by least squares on log-log; returns (alpha, C)."""
    n = np.asarray(n_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = e > 0
    if ok.sum() < 2:
        return math.nan, float(e.max()) if e.size else math.nan
    slope = np.polyfit(np.log(n[ok]), np.log(e[ok]), 1)[0]
    alpha = -2.0 * float(slope)
    return alpha, float(np.max(e * n ** (alpha / 2)))


def default_grid(G, halfwidth: float = 6.0, dx: float = 0.02) -> Grid:
    return build_grid(G, halfwidth, dx, 1.0)


def pde_reference(pair: IIDPair, phi: TestFunction, grid: Optional[Grid] = None) -> float:
    G = pair.g_function()
    grid = grid or default_grid(G)
    if not phi.bounded and phi.growth_exponent > 0:
        phi = truncate_for_domain(phi, grid.halfwidth)
    return gdist_expect(phi, G, grid.with_spatial_dim(1))


def clt_convergence_study(pair: IIDPair, phi, n_list: Sequence[int] = DEFAULT_N_LIST,
                          grid: Optional[Grid] = None, moment_p: int = 2,
                          reference: Optional[float] = None) -> ConvergenceReport:
    phi = as_test_function(phi, 1)
    n_list = list(n_list)
    if n_list != sorted(n_list):
        raise DomainError("n_list must be ascending")
    notes = []
    G = pair.g_function()
    sigma2_min = float(G.support_set().covariances[:, 0, 0].min())
    if sigma2_min <= 0 or not check_ellipticity(G, sigma2_min, samples=50):
        warnings.warn("X is not uniformly elliptic; consider perturb() before trusting rates")
        notes.append("ellipticity not satisfied; no perturbation applied")
    values = [clt_expect(pair, n, phi) for n in n_list]
    ref = pde_reference(pair, phi, grid) if reference is None else reference
    moment = uniform_moment_check(pair, moment_p, n_list)
    notes.append("corpus is finite: convergence is checked for this phi only")
    return ConvergenceReport(n_list, values, ref, moment_bound=moment,
                             joint_mode=pair.joint_mode, corpus=phi.name, notes=notes)


def lln_distance_study(Y: DiscreteUncertainDistribution,
                       n_list: Sequence[int] = DEFAULT_N_LIST) -> ConvergenceReport:
    """Ê[d(S_n, hull)] for S_n = mean of n copies of Y; the limit is 0."""
    if Y.dim != 1:
        raise DimensionError("lln_distance_study handles one-dimensional Y")
    lo, hi = hull_interval(Y.linear_means())
    pair = IIDPair(Y=Y)
    phi = distance_to_interval(lo, hi)
    values = [clt_expect(pair, n, phi) for n in n_list]
    return ConvergenceReport(list(n_list), values, 0.0, corpus=phi.name,
                             notes=[f"hull of means = [{lo}, {hi}]"])


def uniform_moment_check(pair: IIDPair, p: int, n_list: Sequence[int]) -> float:
    if p < 1:
        raise DomainError("moment order p must be >= 1")
    phi = TestFunction(lambda x: np.abs(x) ** p, growth_exponent=p - 1, name=f"|x|^{p}")
    return max(clt_expect(pair, n, phi) for n in n_list)


# -- perturbation ---------------------------------------------------------------

def gaussian_nodes(m: int) -> DiscreteUncertainDistribution:
    """m-node Gauss-Hermite discretisation of N(0, 1) with a singleton credal set."""
    if m < 3 or m % 2 == 0:
        raise DomainError("m must be an odd integer >= 3 (a node at 0 is required)")
    x, w = np.polynomial.hermite_e.hermegauss(m)
    w = w / w.sum()
    x = 0.5 * (x - x[::-1])  # exact symmetry
    return DiscreteUncertainDistribution(1, x.reshape(-1, 1), w.reshape(1, -1))


@dataclass(frozen=True, eq=False)
class PerturbedPair:
    base: IIDPair
    epsilon: float
    eta: DiscreteUncertainDistribution
    pair: IIDPair

    def __post_init__(self):
        p = self.eta.credal
        x = self.eta.support[:, 0]
        if p.shape[0] != 1:
            raise InvariantError("eta must have a singleton credal set")
        w = p[0]
        if abs(w.sum() - 1) > 1e-12 or abs(w @ x) > 1e-12 or abs(w @ x**2 - 1) > 1e-3:
            raise InvariantError("eta must be normalised with mean 0 and variance ~1")

    @property
    def eta_second_moment(self) -> float:
        return float(self.eta.credal[0] @ self.eta.support[:, 0] ** 2)

    @property
    def eta_abs_moment(self) -> float:
        return float(self.eta.credal[0] @ np.abs(self.eta.support[:, 0]))

    def perturbation_bound(self, lipschitz: float) -> float:
        """Lip(phi) * eps * E|eta| bound on |Ê phi(S_n) - Ê phi(S_n^eps)|."""
        return lipschitz * self.epsilon * self.eta_abs_moment


def _convolve(dist: DiscreteUncertainDistribution, eta: DiscreteUncertainDistribution,
              eps: float, coord: int = 0) -> DiscreteUncertainDistribution:
    """Law of Z + eps*eta*e_coord with eta independent and classical."""
    e = eta.support[:, 0]
    w = eta.credal[0]
    pts, cred = [], []
    for j, z in enumerate(dist.support):
        for e_i in e:
            shifted = z.copy()
            shifted[coord] += eps * e_i
            pts.append(shifted)
    cred = np.einsum("kj,i->kji", dist.credal, w).reshape(len(dist.credal), -1)
    return DiscreteUncertainDistribution.merged(dist.dim, np.array(pts), cred)


def perturb(pair: IIDPair, epsilon: float, m: int = 7) -> PerturbedPair:
    """Replace X by X + eps*eta with eta a discretised standard Gaussian."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    eta = gaussian_nodes(m)
    if pair.joint_mode == "joint_credal":
        new = IIDPair(joint_mode="joint_credal", joint=_convolve(pair.joint, eta, epsilon))
    else:
        new = IIDPair(X=_convolve(pair.X, eta, epsilon), Y=pair.Y)
    return PerturbedPair(pair, epsilon, eta, new)


def abs_sum_moment(eta: DiscreteUncertainDistribution, n: int) -> float:
    """E|J_n| for J_n = sum of n classical copies of eta over sqrt(n)."""
    pair = IIDPair(X=eta)
    return clt_expect(pair, n, TestFunction(np.abs, name="|x|"))
