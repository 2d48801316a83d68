"""Sublinear monotone Hamiltonians G(p, A).

Two representations are supported:

* ``SupportG``: G(p, A) = max over (q, Q) in Theta of 0.5 tr[A Q Q^T] + <p, q>
  for a finite set Theta (``form="inf"`` gives the concave min version used
  by the concavity checks of the solver).
* ``InducedG``: G(p, A) = Ê[0.5 <A X, X> + <p, Y>] for a finite (X, Y) pair.

Every finite induced G has an exact support-set form (one pair per extreme
linear expectation), which is what the PDE solver consumes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, DomainError, InvariantError
from .scenario_core import (
    DiscreteUncertainDistribution,
    Leaf,
    Product,
    as_tree,
    expect,
)
from .testfunctions import TestFunction, as_test_function

SYM_TOL = 1e-12
PROPERTY_TOL = 1e-10


def psd_sqrt(C) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] != C.shape[1] or np.max(np.abs(C - C.T), initial=0.0) > SYM_TOL:
        raise DomainError("covariance must be a symmetric square matrix")
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        raise DomainError(f"covariance is not positive semidefinite (eigenvalue {w.min()})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _as_matrix(A, d: int) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (d, d):
        raise DimensionError(f"A must be {d}x{d}, got shape {A.shape}")
    if np.max(np.abs(A - A.T), initial=0.0) > SYM_TOL:
        raise DomainError("A must be symmetric (tolerance 1e-12)")
    return A


def _as_vector(p, d: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (d,):
        raise DimensionError(f"p must have length {d}, got shape {p.shape}")
    return p


@dataclass(frozen=True, eq=False)
class SupportSetTheta:
    """Finite set of (mean, covariance-factor) pairs with optional ellipticity beta."""

    dim: int
    qs: np.ndarray          # (K, d)
    Qs: np.ndarray          # (K, d, d)
    beta: Optional[float] = None

    def __init__(self, dim: int, pairs: Sequence[Tuple], beta: Optional[float] = None):
        pairs = list(pairs)
        if not pairs:
            raise InvariantError("support set Theta must be non-empty")
        qs = np.array([np.atleast_1d(np.asarray(q, dtype=float)) for q, _ in pairs])
        Qs = np.array([np.atleast_2d(np.asarray(Q, dtype=float)) for _, Q in pairs])
        if qs.shape[1:] != (dim,) or Qs.shape[1:] != (dim, dim):
            raise DimensionError(f"every (q, Q) must have dimensions ({dim}, {dim}x{dim})")
        if beta is not None and beta < 0:
            raise DomainError("ellipticity lower bound beta must be >= 0")
        for arr in (qs, Qs):
            arr.setflags(write=False)
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "Qs", Qs)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_covariances(cls, dim: int, pairs, beta: Optional[float] = None):
        """Pairs of (q, C) with C a symmetric PSD covariance; stores sqrt(C)."""
        return cls(dim, [(q, psd_sqrt(C)) for q, C in pairs], beta=beta)

    @property
    def covariances(self) -> np.ndarray:
        return np.einsum("kij,klj->kil", self.Qs, self.Qs)

    def __len__(self):
        return len(self.qs)

    def to_json(self) -> dict:
        out = {"dim": self.dim,
               "pairs": [{"q": q.tolist(), "Q": Q.tolist()} for q, Q in zip(self.qs, self.Qs)]}
        if self.beta is not None:
            out["beta"] = self.beta
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SupportSetTheta":
        try:
            d = int(obj["dim"])
            pairs = [(p["q"], p["Q"]) for p in obj["pairs"]]
        except (KeyError, TypeError) as exc:
            raise InvariantError(f"support-set JSON malformed: {exc}") from exc
        return cls(d, pairs, beta=obj.get("beta"))


class GFunction:
    """Common interface; subclasses provide ``support_set`` and ``_eval``."""

    dim: int
    form: str = "sup"

    def support_set(self) -> SupportSetTheta:
        raise NotImplementedError

    def _eval(self, p: np.ndarray, A: np.ndarray) -> float:
        raise NotImplementedError

    def __call__(self, p, A) -> float:
        return self._eval(_as_vector(p, self.dim), _as_matrix(A, self.dim))

    # scenario data consumed by the PDE solver (d = 1 only there)
    def scenarios(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (q, sigma^2) arrays for a one-dimensional G."""
        if self.dim != 1:
            raise DimensionError("scenario arrays are only defined for d = 1")
        theta = self.support_set()
        return theta.qs[:, 0].copy(), theta.covariances[:, 0, 0].copy()

    @property
    def sigma2_max(self) -> float:
        theta = self.support_set()
        return float(max(np.linalg.eigvalsh(C).max() for C in theta.covariances))

    @property
    def q_max(self) -> float:
        return float(np.linalg.norm(self.support_set().qs, axis=1).max())


class SupportG(GFunction):
    def __init__(self, theta: SupportSetTheta, form: str = "sup"):
        if form not in ("sup", "inf"):
            raise DomainError("form must be 'sup' or 'inf'")
        self.theta = theta
        self.dim = theta.dim
        self.form = form
        self._covs = theta.covariances

    def support_set(self) -> SupportSetTheta:
        return self.theta

    def scenario_values(self, p: np.ndarray, A: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("ij,kji->k", A, self._covs) + self.theta.qs @ p

    def _eval(self, p, A) -> float:
        vals = self.scenario_values(p, A)
        return float(vals.max() if self.form == "sup" else vals.min())

    def inf_form(self) -> "SupportG":
        return SupportG(self.theta, form="inf")

    def __repr__(self):
        return f"SupportG(dim={self.dim}, |Theta|={len(self.theta)}, form={self.form!r})"


class InducedG(GFunction):
    """G from a composition tree whose first d coordinates are X and last d are Y."""

    def __init__(self, tree, dim: int):
        tree = as_tree(tree)
        if tree.total_dim != 2 * dim:
            raise DimensionError(f"pair tree has dimension {tree.total_dim}, expected {2 * dim}")
        self.tree = tree
        self.dim = dim
        self._theta = None

    def _eval(self, p, A) -> float:
        d = self.dim

        def phi(*z):
            x = np.asarray(z[:d])
            y = np.asarray(z[d:])
            return 0.5 * float(x @ A @ x) + float(p @ y)

        return expect(self.tree, TestFunction(phi, arity=2 * d))

    def support_set(self) -> SupportSetTheta:
        """Extreme pairs of the induced G.

        A joint leaf gives one (E_k[Y], sqrt E_k[X X^T]) per credal vector; a
        product of an X-leaf and a Y-leaf gives all combinations, which is exact
        because the quadratic-plus-linear integrand separates.
        """
        if self._theta is None:
            d = self.dim
            if isinstance(self.tree, Leaf):
                dist = self.tree.dist
                means = dist.linear_means()[:, d:]
                covs = dist.second_moments()[:, :d, :d]
                pairs = list(zip(means, covs))
            elif (isinstance(self.tree, Product) and isinstance(self.tree.left, Leaf)
                  and isinstance(self.tree.right, Leaf) and self.tree.left.total_dim == d):
                X, Y = self.tree.left.dist, self.tree.right.dist
                pairs = list(itertools.product(_unique_rows(Y.linear_means()),
                                               _unique_rows(X.second_moments())))
            else:
                raise DimensionError("support set is only derived for a joint leaf or an X*Y product")
            self._theta = SupportSetTheta.from_covariances(d, pairs)
        return self._theta

    def __repr__(self):
        return f"InducedG(dim={self.dim})"


def _unique_rows(arr: np.ndarray) -> list:
    flat = arr.reshape(len(arr), -1)
    _, idx = np.unique(np.round(flat, 14), axis=0, return_index=True)
    return [arr[i] for i in sorted(idx)]


def g_eval(G: GFunction, p, A) -> float:
    return G(p, A)


def g_from_distribution(X: DiscreteUncertainDistribution,
                        Y: Optional[DiscreteUncertainDistribution] = None,
                        joint: Optional[DiscreteUncertainDistribution] = None) -> InducedG:
    """Induced G of a pair.

    With marginals, the pair is ``product(X, Y)`` (Y independent to X); a
    ``joint`` distribution on R^{2d} carries one credal set for (X, Y).
    """
    if joint is not None:
        if joint.dim % 2:
            raise DimensionError("joint (X, Y) distribution must have even dimension")
        return InducedG(Leaf(joint), joint.dim // 2)
    if Y is None:
        raise DomainError("either Y or joint must be supplied")
    if X.dim != Y.dim:
        raise DimensionError(f"dim(X)={X.dim} differs from dim(Y)={Y.dim}")
    return InducedG(Product(Leaf(X), Leaf(Y)), X.dim)


@dataclass(frozen=True)
class MeanPart:
    """p -> G(p, 0) together with Theta-bar (the set of means)."""

    G: GFunction
    points: np.ndarray

    def __call__(self, p) -> float:
        return self.G(p, np.zeros((self.G.dim, self.G.dim)))


@dataclass(frozen=True)
class CovPart:
    """A -> G(0, A) together with Theta-hat (the set of covariances)."""

    G: GFunction
    covariances: np.ndarray

    def __call__(self, A) -> float:
        return self.G(np.zeros(self.G.dim), A)


def g_mean_part(G: GFunction) -> MeanPart:
    return MeanPart(G, np.array(_unique_rows(G.support_set().qs)))


def g_cov_part(G: GFunction) -> CovPart:
    return CovPart(G, np.array(_unique_rows(G.support_set().covariances)))


def maximal_expect(theta_bar, phi) -> float:
    """Expectation under the maximal distribution: max of phi over Theta-bar."""
    pts = np.asarray(theta_bar, dtype=float)
    if pts.size == 0:
        raise DomainError("Theta-bar must be non-empty")
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    phi = as_test_function(phi, pts.shape[1])
    return float(max(float(phi(*pt)) for pt in pts))


def hull_interval(theta_bar) -> Tuple[float, float]:
    pts = np.asarray(theta_bar, dtype=float).reshape(-1)
    return float(pts.min()), float(pts.max())


# -- property checks -----------------------------------------------------------

@dataclass
class GPropertyReport:
    samples: int
    failures: dict = field(default_factory=lambda: {"sub_additivity": [],
                                                    "positive_homogeneity": [],
                                                    "monotonicity": [],
                                                    "zero": []})

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())


def _random_sym(rng, d, scale=2.0):
    M = rng.normal(scale=scale, size=(d, d))
    return 0.5 * (M + M.T)


def check_g_properties(G: GFunction, samples: int = 200,
                       rng: Optional[np.random.Generator] = None,
                       tol: float = PROPERTY_TOL) -> GPropertyReport:
    if samples < 1:
        raise DomainError("samples must be >= 1")
    rng = rng or np.random.default_rng(0)
    d = G.dim
    rep = GPropertyReport(samples)
    z = G(np.zeros(d), np.zeros((d, d)))
    if z != 0.0:
        rep.failures["zero"].append(z)
    for _ in range(samples):
        p, pb = rng.normal(size=d), rng.normal(size=d)
        A, Ab = _random_sym(rng, d), _random_sym(rng, d)
        lhs, rhs = G(p + pb, A + Ab), G(p, A) + G(pb, Ab)
        if lhs > rhs + tol * max(1.0, abs(rhs)):
            rep.failures["sub_additivity"].append((p, A, pb, Ab, lhs, rhs))
        base = G(p, A)
        for lam in (0.0, 1.0, 3.0):
            got = G(lam * p, lam * A)
            if abs(got - lam * base) > tol * max(1.0, abs(lam * base)):
                rep.failures["positive_homogeneity"].append((p, A, lam, got, lam * base))
        c = rng.normal(size=d)
        lower = A - np.outer(c, c)
        if G(p, A) < G(p, lower) - tol * max(1.0, abs(G(p, A))):
            rep.failures["monotonicity"].append((p, A, c))
    return rep


def check_ellipticity(G: GFunction, beta: float, samples: int = 200,
                      rng: Optional[np.random.Generator] = None,
                      tol: float = PROPERTY_TOL) -> bool:
    """Sampled check of Ĝ(A) - Ĝ(B) >= (beta/2) tr[A - B] for A >= B."""
    rng = rng or np.random.default_rng(0)
    d = G.dim
    zero = np.zeros(d)
    for _ in range(samples):
        B = _random_sym(rng, d)
        C = rng.normal(size=(d, d))
        A = B + C @ C.T
        A = 0.5 * (A + A.T)
        lhs = G(zero, A) - G(zero, B)
        if lhs < 0.5 * beta * np.trace(A - B) - tol * max(1.0, abs(lhs)):
            return False
    return True
