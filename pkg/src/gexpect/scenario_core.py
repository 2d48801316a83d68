"""Sublinear expectations over finite credal sets and their products.

A leaf is a finite support in R^d with a finite family of probability
vectors; its upper expectation is the max of the linear expectations.
Products are kept as lazy trees because independence under a sublinear
expectation depends on the order of the factors: in ``Product(left, right)``
the right factor is independent to the left one, so its expectation is taken
first with the left coordinates frozen.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Union

import numpy as np

from .errors import DimensionError, DomainError, InvariantError
from .testfunctions import TestFunction, as_test_function

PROB_TOL = 1e-12
AXIOM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteUncertainDistribution:
    """Finite support points with a credal set of probability vectors."""

    dim: int
    support: np.ndarray
    credal: np.ndarray

    def __init__(self, dim: int, support, credal):
        sup = np.asarray(support, dtype=float)
        if sup.ndim == 1:
            sup = sup.reshape(-1, 1) if dim == 1 else sup.reshape(1, -1)
        cred = np.atleast_2d(np.asarray(credal, dtype=float))
        if dim < 1:
            raise DimensionError("dim must be a positive integer")
        if sup.ndim != 2 or sup.shape[1] != dim or len(sup) == 0:
            raise DimensionError(f"support must be a non-empty list of points in R^{dim}")
        if cred.size == 0:
            raise InvariantError("credal set must be non-empty")
        if cred.shape[1] != len(sup):
            raise InvariantError(
                f"credal vectors have length {cred.shape[1]}, support has {len(sup)} points"
            )
        if np.any(cred < 0):
            raise InvariantError("probability vectors must be componentwise >= 0")
        sums = cred.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            bad = float(sums[np.argmax(np.abs(sums - 1.0))])
            raise InvariantError(
                f"normalization invariant violated: probability vector sums to {bad!r} "
                f"(tolerance {PROB_TOL})"
            )
        if len(np.unique(sup, axis=0)) != len(sup):
            raise InvariantError("support points must be pairwise distinct")
        sup.setflags(write=False)
        cred.setflags(write=False)
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "credal", cred)

    @classmethod
    def merged(cls, dim: int, support, credal) -> "DiscreteUncertainDistribution":
        """Build a distribution, summing the weights of repeated support points."""
        sup = np.asarray(support, dtype=float).reshape(-1, dim)
        cred = np.atleast_2d(np.asarray(credal, dtype=float))
        uniq, inverse = np.unique(sup, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        out = np.zeros((len(cred), len(uniq)))
        for j, k in enumerate(inverse):
            out[:, k] += cred[:, j]
        return cls(dim, uniq, out)

    @classmethod
    def deterministic(cls, value) -> "DiscreteUncertainDistribution":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(len(v), v.reshape(1, -1), [[1.0]])

    def linear_means(self) -> np.ndarray:
        """Mean vector under each credal vector, shape (K, d)."""
        return self.credal @ self.support

    def second_moments(self) -> np.ndarray:
        """E_p[x x^T] under each credal vector, shape (K, d, d)."""
        outer = np.einsum("ji,jk->jik", self.support, self.support)
        return np.einsum("kj,jil->kil", self.credal, outer)

    def to_json(self) -> dict:
        return {"dim": self.dim, "support": self.support.tolist(),
                "credal": self.credal.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "DiscreteUncertainDistribution":
        try:
            return cls(int(obj["dim"]), obj["support"], obj["credal"])
        except KeyError as exc:
            raise InvariantError(f"distribution JSON missing field {exc}") from exc


@dataclass(frozen=True)
class Leaf:
    dist: DiscreteUncertainDistribution

    @property
    def total_dim(self) -> int:
        return self.dist.dim


@dataclass(frozen=True)
class Product:
    """``right`` is independent to ``left``."""

    left: "CompositionTree"
    right: "CompositionTree"
    total_dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total_dim", self.left.total_dim + self.right.total_dim)


CompositionTree = Union[Leaf, Product]


def as_tree(obj) -> CompositionTree:
    if isinstance(obj, (Leaf, Product)):
        return obj
    if isinstance(obj, DiscreteUncertainDistribution):
        return Leaf(obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a composition tree")


def tree_to_json(tree: CompositionTree) -> dict:
    if isinstance(tree, Leaf):
        return {"leaf": tree.dist.to_json()}
    return {"product": [tree_to_json(tree.left), tree_to_json(tree.right)]}


def tree_from_json(obj: dict) -> CompositionTree:
    if "leaf" in obj:
        return Leaf(DiscreteUncertainDistribution.from_json(obj["leaf"]))
    if "product" in obj:
        left, right = obj["product"]
        return Product(tree_from_json(left), tree_from_json(right))
    if "dim" in obj:
        return Leaf(DiscreteUncertainDistribution.from_json(obj))
    raise InvariantError("tree JSON must have a 'leaf' or 'product' field")


def leaves(tree: CompositionTree) -> List[DiscreteUncertainDistribution]:
    if isinstance(tree, Leaf):
        return [tree.dist]
    return leaves(tree.left) + leaves(tree.right)


def support_points(tree: CompositionTree) -> np.ndarray:
    """Cartesian product of all leaf supports, shape (N, total_dim)."""
    rows = [
        np.concatenate(combo)
        for combo in itertools.product(*[list(d.support) for d in leaves(tree)])
    ]
    return np.array(rows)


# -- evaluation -----------------------------------------------------------------

def leaf_expect(dist: DiscreteUncertainDistribution, values) -> np.ndarray:
    """Upper expectation over one leaf for a stack of values.

    ``values`` has shape (m, ...) with one slice per support point. The
    linear expectation is computed relative to the first support value so
    constants come out exactly.
    """
    vals = np.asarray(values, dtype=float)
    ref = vals[0]
    diffs = (vals - ref).reshape(len(vals), -1)
    lin = dist.credal @ diffs
    return ref + lin.max(axis=0).reshape(ref.shape)


def expect_batch(tree: CompositionTree, fn: Callable[[tuple], object]):
    """Evaluate the sublinear expectation of ``fn`` over ``tree``.

    ``fn`` receives the tree's coordinates as a tuple of floats and may return
    a scalar or an ndarray (all calls must share one shape); the expectation is
    taken elementwise. This is what the limit harness uses to sweep many
    partial-sum states at once.
    """
    if isinstance(tree, Leaf):
        dist = tree.dist
        stack = [np.asarray(fn(tuple(float(c) for c in pt)), dtype=float)
                 for pt in dist.support]
        return leaf_expect(dist, np.stack(stack))
    return expect_batch(
        tree.left,
        lambda x: expect_batch(tree.right, lambda y: fn(x + y)),
    )


def expect(tree, phi) -> float:
    """Ê[phi] on a composition tree (a leaf distribution is accepted too)."""
    tree = as_tree(tree)
    phi = as_test_function(phi)
    if phi.arity != tree.total_dim:
        raise DimensionError(
            f"test function arity {phi.arity} != tree dimension {tree.total_dim}"
        )
    return float(expect_batch(tree, lambda pt: phi(*pt)))


def product(left, right) -> Product:
    return Product(as_tree(left), as_tree(right))


def iid_sequence(d, n: int) -> CompositionTree:
    """Left-nested product of n copies; copy i+1 is independent to copies 1..i."""
    if n < 1:
        raise DomainError(f"iid_sequence needs n >= 1, got {n}")
    base = as_tree(d)
    tree = base
    for _ in range(n - 1):
        tree = Product(tree, base)
    return tree


@dataclass(frozen=True)
class UncertaintyParameters:
    mean_upper: float
    mean_lower: float
    var_upper: float
    var_lower: float

    def __post_init__(self):
        if self.mean_lower > self.mean_upper + AXIOM_TOL:
            raise InvariantError("mean_lower exceeds mean_upper")
        if self.var_lower > self.var_upper + AXIOM_TOL:
            raise InvariantError("var_lower exceeds var_upper")

    def as_tuple(self):
        return (self.mean_upper, self.mean_lower, self.var_upper, self.var_lower)


def four_parameters(d: DiscreteUncertainDistribution) -> UncertaintyParameters:
    if d.dim != 1:
        raise DimensionError("four_parameters is defined for one-dimensional distributions")
    leaf = Leaf(d)
    return UncertaintyParameters(
        mean_upper=expect(leaf, lambda x: x),
        mean_lower=-expect(leaf, lambda x: -x),
        var_upper=expect(leaf, lambda x: x * x),
        var_lower=-expect(leaf, lambda x: -x * x),
    )


# -- axiom checks -----------------------------------------------------------------

@dataclass
class AxiomResult:
    name: str
    passed: bool = True
    checks: int = 0
    witnesses: list = field(default_factory=list)

    def record(self, ok: bool, witness):
        self.checks += 1
        if not ok:
            self.passed = False
            self.witnesses.append(witness)


@dataclass
class AxiomReport:
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def lines(self) -> List[str]:
        return [f"{r.name}: {'PASS' if r.passed else 'FAIL'} ({r.checks} checks)"
                for r in self.results.values()]


def _close(a: float, b: float, tol: float = AXIOM_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def check_axioms(tree, fns: Sequence, points: int = 0,
                 constants: Sequence[float] = (0.0, 7.0, -3.25),
                 lambdas: Sequence[float] = (0.0, 1.0, 2.5)) -> AxiomReport:
    """Check monotonicity, constant preservation, sub-additivity, homogeneity.

    ``points`` extra random constants are drawn deterministically in addition
    to ``constants``.
    """
    tree = as_tree(tree)
    fns = [as_test_function(f, tree.total_dim) for f in fns]
    if not fns:
        raise DomainError("check_axioms needs at least one test function")
    names = ("monotonicity", "constant_preserving", "sub_additivity",
             "positive_homogeneity")
    res = {n: AxiomResult(n) for n in names}

    pts = support_points(tree)
    table = [np.asarray(f(*pts.T), dtype=float) * np.ones(len(pts)) for f in fns]
    values = [expect(tree, f) for f in fns]

    consts = list(constants)
    if points:
        consts += list(np.random.default_rng(0).normal(scale=10.0, size=points))
    for c in consts:
        got = expect(tree, TestFunction(lambda *x, c=c: c + 0.0 * x[0],
                                        arity=tree.total_dim))
        res["constant_preserving"].record(got == c, {"c": c, "got": got})

    for i, j in itertools.product(range(len(fns)), repeat=2):
        if np.all(table[i] <= table[j]):
            ok = values[i] <= values[j] + AXIOM_TOL * max(1.0, abs(values[j]))
            res["monotonicity"].record(ok, {"phi": i, "psi": j, "E_phi": values[i],
                                            "E_psi": values[j]})
        if i <= j:
            f, g = fns[i], fns[j]
            s = expect(tree, TestFunction(lambda *x, f=f, g=g: f(*x) + g(*x),
                                          arity=tree.total_dim))
            bound = values[i] + values[j]
            ok = s <= bound + AXIOM_TOL * max(1.0, abs(bound))
            res["sub_additivity"].record(ok, {"phi": i, "psi": j, "E_sum": s,
                                              "bound": bound})

    for i, f in enumerate(fns):
        for lam in lambdas:
            got = expect(tree, f.scaled(lam))
            res["positive_homogeneity"].record(
                _close(got, lam * values[i]),
                {"phi": i, "lambda": lam, "got": got, "want": lam * values[i]},
            )
    return AxiomReport(res)
