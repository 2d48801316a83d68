"""Test functions phi: R^k -> R and a small registry of named shapes.

Evaluators are called as ``fn(*coords)`` with one positional argument per
scalar coordinate; every built-in evaluator broadcasts over numpy arrays so
the harness and the PDE solver can evaluate whole grids at once.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError

CONVEXITY_TAGS = ("convex", "concave", "neither", "unknown")


@dataclass(frozen=True)
class TestFunction:
    """A test function together with its declared regularity metadata.

    ``growth_exponent`` is the m of the local-Lipschitz class
    |phi(x) - phi(y)| <= C (1 + |x|^m + |y|^m) |x - y|.
    """

    __test__ = False  # keep pytest from collecting this class

    evaluator: Callable[..., object]
    arity: int = 1
    growth_exponent: int = 0
    lipschitz_bound: Optional[float] = None
    bounded: bool = False
    convexity_tag: str = "unknown"
    name: str = "custom"

    def __post_init__(self):
        if self.arity < 1:
            raise DimensionError(f"arity must be >= 1, got {self.arity}")
        if self.growth_exponent < 0:
            raise DomainError("growth_exponent must be non-negative")
        if self.lipschitz_bound is not None and self.lipschitz_bound <= 0:
            raise DomainError("lipschitz_bound must be positive when given")
        if self.convexity_tag not in CONVEXITY_TAGS:
            raise DomainError(f"unknown convexity tag {self.convexity_tag!r}")

    def __call__(self, *coords):
        if len(coords) != self.arity:
            raise DimensionError(
                f"{self.name} expects {self.arity} coordinates, got {len(coords)}"
            )
        return self.evaluator(*coords)

    def scaled(self, lam: float) -> "TestFunction":
        fn = self.evaluator
        lip = None if self.lipschitz_bound is None else abs(lam) * self.lipschitz_bound
        return TestFunction(
            lambda *c: lam * np.asarray(fn(*c), dtype=float),
            arity=self.arity,
            growth_exponent=self.growth_exponent,
            lipschitz_bound=lip if lip else None,
            bounded=self.bounded,
            name=f"{lam}*{self.name}",
        )


def as_test_function(phi, arity: Optional[int] = None) -> TestFunction:
    """Wrap a plain callable; arity is inferred from its signature if needed."""
    if isinstance(phi, TestFunction):
        if arity is not None and phi.arity != arity:
            raise DimensionError(f"{phi.name} has arity {phi.arity}, need {arity}")
        return phi
    if arity is None:
        params = inspect.signature(phi).parameters.values()
        if any(p.kind is p.VAR_POSITIONAL for p in params):
            raise DimensionError("cannot infer arity of a *args callable; pass arity")
        arity = sum(1 for p in params if p.default is p.empty)
    return TestFunction(phi, arity=arity)


def check_growth(phi: TestFunction, constant: float, rng: np.random.Generator,
                 n_pairs: int = 1000, radius: float = 10.0) -> bool:
    """Sample pairs and test the declared local-Lipschitz growth bound."""
    m = phi.growth_exponent
    x = rng.uniform(-radius, radius, size=(n_pairs, phi.arity))
    y = rng.uniform(-radius, radius, size=(n_pairs, phi.arity))
    fx = np.asarray(phi(*x.T), dtype=float)
    fy = np.asarray(phi(*y.T), dtype=float)
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    rhs = constant * (1 + nx**m + ny**m) * np.linalg.norm(x - y, axis=1)
    if phi.lipschitz_bound is not None:
        rhs = np.minimum(rhs, phi.lipschitz_bound * np.linalg.norm(x - y, axis=1))
    return bool(np.all(np.abs(fx - fy) <= rhs * (1 + 1e-12) + 1e-12))


# -- registry -----------------------------------------------------------------

def quad(A: float, p: float, full: bool = False) -> TestFunction:
    """0.5*A*x^2 + p*x, or 0.5*A*x^2 + p*y when ``full`` (two arguments)."""
    tag = "convex" if A > 0 else ("concave" if A < 0 else "neither")
    if full:
        return TestFunction(lambda x, y: 0.5 * A * np.square(x) + p * np.asarray(y),
                            arity=2, growth_exponent=1, convexity_tag=tag,
                            name=f"quad:{A}:{p}")
    return TestFunction(lambda x: 0.5 * A * np.square(x) + p * np.asarray(x),
                        arity=1, growth_exponent=1, convexity_tag=tag,
                        name=f"quad:{A}:{p}")


def abs_clipped(level: float) -> TestFunction:
    return TestFunction(lambda x: np.minimum(np.abs(x), level), lipschitz_bound=1.0,
                        bounded=True, name=f"abs_clipped:{level}")


def indicator_smooth(a: float, b: float, width: float = 0.5) -> TestFunction:
    """C^1 bump equal to 1 on [a, b], falling to 0 over ``width`` on each side."""
    if not a < b:
        raise DomainError("indicator_smooth needs a < b")

    def ramp(t):
        t = np.clip(t, 0.0, 1.0)
        return 0.5 - 0.5 * np.cos(np.pi * t)

    def fn(x):
        x = np.asarray(x, dtype=float)
        return ramp((x - a + width) / width) * ramp((b + width - x) / width)

    return TestFunction(fn, lipschitz_bound=np.pi / (2 * width), bounded=True,
                        name=f"indicator_smooth:{a}:{b}")


def distance_to_interval(lo: float, hi: float) -> TestFunction:
    """Distance to the interval [lo, hi] (the convex hull of a 1-d point set)."""
    if lo > hi:
        raise DomainError("interval lower end exceeds upper end")
    return TestFunction(lambda x: np.maximum(np.maximum(lo - np.asarray(x), np.asarray(x) - hi), 0.0),
                        lipschitz_bound=1.0, convexity_tag="convex",
                        name=f"distance_to_hull:[{lo},{hi}]")


def polyline(nodes: Sequence[Sequence[float]]) -> TestFunction:
    """Piecewise-linear interpolant, constant beyond the end nodes."""
    pts = np.asarray(nodes, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DomainError("polyline needs at least two (x, value) nodes")
    xs, vs = pts[:, 0], pts[:, 1]
    if np.any(np.diff(xs) <= 0):
        raise DomainError("polyline nodes must be strictly increasing in x")
    lip = float(np.max(np.abs(np.diff(vs) / np.diff(xs))))
    return TestFunction(lambda x: np.interp(x, xs, vs), lipschitz_bound=lip or None,
                        bounded=True, name="custom_polyline")


def random_polyline(rng: np.random.Generator, n_nodes: int = 6, span: float = 4.0,
                    amplitude: float = 1.0) -> TestFunction:
    """Random bounded Lipschitz piecewise-linear function used by property suites."""
    gaps = rng.uniform(0.5, 1.5, size=n_nodes - 1)
    xs = np.concatenate([[0.0], np.cumsum(gaps)])
    xs = xs - xs[-1] / 2
    xs = xs * (span / max(xs[-1], 1e-12))
    vs = rng.uniform(-amplitude, amplitude, size=n_nodes)
    return polyline(np.column_stack([xs, vs]))


def truncate_for_domain(phi: TestFunction, halfwidth: float) -> TestFunction:
    """Replace phi outside [-L+1, L-1] by its linear continuation.

    Used before handing a polynomial-growth phi to the truncated PDE grid.
    """
    lo, hi = -halfwidth + 1.0, halfwidth - 1.0
    if hi <= lo:
        raise DomainError("halfwidth too small to truncate")
    h = 1e-6
    f = phi.evaluator
    f_lo, f_hi = float(f(lo)), float(f(hi))
    s_lo = (float(f(lo + h)) - f_lo) / h
    s_hi = (f_hi - float(f(hi - h))) / h

    def fn(x):
        x = np.asarray(x, dtype=float)
        inner = np.asarray(f(np.clip(x, lo, hi)), dtype=float)
        return np.where(x < lo, f_lo + s_lo * (x - lo),
                        np.where(x > hi, f_hi + s_hi * (x - hi), inner))

    return TestFunction(fn, growth_exponent=0, convexity_tag=phi.convexity_tag,
                        name=f"truncated({phi.name})")


def from_spec(spec, *, hull: Optional[tuple] = None, full: bool = False) -> TestFunction:
    """Build a registry function from ``"quad:A:p"``-style strings or dicts.

    Recognised names: quad, abs_clipped, indicator_smooth, distance_to_hull,
    custom_polyline (dict form with a ``nodes`` list).
    """
    if isinstance(spec, dict):
        name = spec.get("name")
        if name == "custom_polyline":
            return polyline(spec.get("nodes", []))
        if name is None:
            raise DomainError("phi dict needs a 'name'")
        args = [str(a) for a in spec.get("args", [])]
        spec = ":".join([name, *args])
    parts = str(spec).split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "quad":
            return quad(float(args[0]), float(args[1]), full=full)
        if name == "abs_clipped":
            return abs_clipped(float(args[0]))
        if name == "indicator_smooth":
            return indicator_smooth(float(args[0]), float(args[1]))
        if name == "distance_to_hull":
            if args:
                return distance_to_interval(float(args[0]), float(args[1]))
            if hull is None:
                raise DomainError("distance_to_hull needs a hull (from Y) or explicit bounds")
            return distance_to_interval(*hull)
    except (IndexError, ValueError) as exc:
        raise DomainError(f"bad arguments for phi {spec!r}: {exc}") from exc
    raise DomainError(f"unknown test function {spec!r}")
