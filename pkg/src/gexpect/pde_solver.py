"""Explicit monotone finite-difference solver for the G-heat equation.

Reduced form (one space variable)::

    v_t = G(v_x, v_xx) = max_k [ 0.5 sigma_k^2 v_xx + q_k v_x ]

Full form on (x, y) with diffusion in x and transport in y::

    u_t = G(u_y, u_xx)

Each scenario k is discretised with a central second difference and a
one-sided first difference taken upwind for the sign of q_k; the max (or min
for an inf-form Hamiltonian) is taken per node. Under the CFL bound every
neighbour weight is non-negative, which makes the update monotone, also
after floating-point rounding (see the kernel notes below).
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError, NumericalBlowUpError
from .gfunction import GFunction
from .testfunctions import TestFunction, as_test_function

BOUNDARY_MODES = ("frozen_initial", "linear_extrapolation")
_STEP_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    spatial_dim: int
    x_min: float
    x_max: float
    dx: float
    dt: float
    t_final: float

    def __post_init__(self):
        if self.spatial_dim not in (1, 2):
            raise ConfigurationError("spatial_dim must be 1 or 2")
        if self.dx <= 0 or self.dt <= 0 or self.t_final <= 0:
            raise ConfigurationError("dx, dt and t_final must be positive")
        cells = (self.x_max - self.x_min) / self.dx
        if abs(cells - round(cells)) > _STEP_TOL * max(1.0, cells) or round(cells) < 8:
            raise ConfigurationError(
                f"(x_max - x_min)/dx = {cells} must be an integer >= 8"
            )
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > _STEP_TOL * max(1.0, steps):
            raise ConfigurationError(f"t_final/dt = {steps} must be an integer")

    @property
    def n_nodes(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.x_max - self.x_min)

    def nodes(self) -> np.ndarray:
        start = self.x_min / self.dx
        if abs(start - round(start)) <= _STEP_TOL:
            return (round(start) + np.arange(self.n_nodes)) * self.dx
        return self.x_min + self.dx * np.arange(self.n_nodes)

    def origin_index(self) -> int:
        x = self.nodes()
        i = int(np.argmin(np.abs(x)))
        if abs(x[i]) > _STEP_TOL * self.dx:
            raise ConfigurationError("the origin is not a grid node")
        return i

    def steps_for(self, t: float) -> int:
        k = t / self.dt
        if abs(k - round(k)) > _STEP_TOL * max(1.0, k):
            raise ConfigurationError(f"t={t} is not a whole number of steps dt={self.dt}")
        return int(round(k))

    def with_spatial_dim(self, spatial_dim: int) -> "Grid":
        return replace(self, spatial_dim=spatial_dim)

    def cfl_ok(self, G: GFunction) -> bool:
        return self.dt <= cfl_dt(G, self.dx) * (1 + 1e-12)


def cfl_dt(G: GFunction, dx: float) -> float:
    """Largest monotone time step 1 / (sigma2_max/dx^2 + q_max/dx)."""
    rate = G.sigma2_max / dx**2 + G.q_max / dx
    return math.inf if rate == 0 else 1.0 / rate


def cone_width(G: GFunction, t_final: float) -> float:
    return 3.0 * math.sqrt(G.sigma2_max * t_final) + G.q_max * t_final


def build_grid(G: GFunction, halfwidth: float, dx: float, t_final: float,
               safety: float = 1.0, spatial_dim: int = 1, step_multiple: int = 1) -> Grid:
    """Grid on [-L, L] with the largest CFL-admissible dt dividing t_final.

    ``step_multiple`` rounds the step count up to a multiple, e.g. 10 so that
    t = 0.3 and t = 0.7 are both whole numbers of steps when t_final = 1.
    """
    if halfwidth <= 0 or dx <= 0 or t_final <= 0:
        raise ConfigurationError("halfwidth, dx and t_final must be positive")
    if not 0 < safety <= 1:
        raise ConfigurationError("safety must lie in (0, 1]")
    cone = cone_width(G, t_final)
    if halfwidth < cone:
        raise ConfigurationError(
            f"halfwidth L={halfwidth} does not contain the diffusion/transport cone; "
            f"use L >= {cone:.4g}"
        )
    dt_max = safety * cfl_dt(G, dx)
    steps = 1 if math.isinf(dt_max) else max(1, math.ceil(t_final / dt_max - 1e-12))
    steps = -(-steps // step_multiple) * step_multiple
    grid = Grid(spatial_dim, -halfwidth, halfwidth, dx, t_final / steps, t_final)
    if not grid.cfl_ok(G):
        raise ConfigurationError("grid violates the CFL monotonicity bound")
    return grid


@dataclass(frozen=True, eq=False)
class SolutionField:
    grid: Grid
    values: np.ndarray
    time: float
    boundary_mode: str = "frozen_initial"
    truncation_error_bound: float = 0.0

    def __post_init__(self):
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigurationError(f"unknown boundary mode {self.boundary_mode!r}")
        if not np.all(np.isfinite(self.values)):
            raise NumericalBlowUpError("solution field contains non-finite values")
        if not -_STEP_TOL <= self.time <= self.grid.t_final * (1 + _STEP_TOL):
            raise DomainError("field time outside [0, t_final]")
        self.values.setflags(write=False)

    def at_origin(self) -> float:
        i = self.grid.origin_index()
        if self.values.ndim == 1:
            return float(self.values[i])
        return float(self.values[i, i])

    def to_csv(self, path) -> None:
        write_field(self, path)


# -- kernels --------------------------------------------------------------------
#
# Per scenario the update is a combination of stencil values with
# non-negative weights, so each rounded product and sum is non-decreasing in
# every input; the per-node max/min and the final clamp to the stencil range
# are monotone as well. The clamp only removes rounding excursions (the exact
# update already lies in that range) and makes constants come out exactly.

@numba.njit(cache=True)
def _advance_1d(v, nsteps, wc, wl, wr, use_max, extrapolate):
    n = v.shape[0]
    cur = v.copy()
    nxt = v.copy()
    K = wc.shape[0]
    for _ in range(nsteps):
        for i in range(1, n - 1):
            c = cur[i]
            left = cur[i - 1]
            right = cur[i + 1]
            best = wc[0] * c + wl[0] * left + wr[0] * right
            for k in range(1, K):
                val = wc[k] * c + wl[k] * left + wr[k] * right
                if use_max:
                    if val > best:
                        best = val
                elif val < best:
                    best = val
            lo = min(c, min(left, right))
            hi = max(c, max(left, right))
            nxt[i] = min(max(best, lo), hi)
        if extrapolate:
            nxt[0] = 2.0 * nxt[1] - nxt[2]
            nxt[n - 1] = 2.0 * nxt[n - 2] - nxt[n - 3]
        else:
            nxt[0] = cur[0]
            nxt[n - 1] = cur[n - 1]
        cur, nxt = nxt, cur
    return cur


@numba.njit(cache=True)
def _advance_2d(u, nsteps, wc, wx, wyu, wyd, use_max, extrapolate):
    # axis 0 is x (diffusion), axis 1 is y (transport); the scenario loop sits
    # outside the contiguous y loop so the latter vectorises
    nx, ny = u.shape
    cur = u.copy()
    nxt = u.copy()
    K = wc.shape[0]
    xs = np.empty(ny)
    best = np.empty(ny)
    for _ in range(nsteps):
        for i in range(1, nx - 1):
            a = wc[0]
            b = wx[0]
            f = wyu[0]
            g = wyd[0]
            for j in range(1, ny - 1):
                xs[j] = cur[i + 1, j] + cur[i - 1, j]
                best[j] = a * cur[i, j] + b * xs[j] + f * cur[i, j + 1] + g * cur[i, j - 1]
            for k in range(1, K):
                a = wc[k]
                b = wx[k]
                f = wyu[k]
                g = wyd[k]
                if use_max:
                    for j in range(1, ny - 1):
                        val = a * cur[i, j] + b * xs[j] + f * cur[i, j + 1] + g * cur[i, j - 1]
                        best[j] = val if val > best[j] else best[j]
                else:
                    for j in range(1, ny - 1):
                        val = a * cur[i, j] + b * xs[j] + f * cur[i, j + 1] + g * cur[i, j - 1]
                        best[j] = val if val < best[j] else best[j]
            for j in range(1, ny - 1):
                lo = min(min(cur[i, j], cur[i + 1, j]), min(cur[i - 1, j], min(cur[i, j + 1], cur[i, j - 1])))
                hi = max(max(cur[i, j], cur[i + 1, j]), max(cur[i - 1, j], max(cur[i, j + 1], cur[i, j - 1])))
                nxt[i, j] = min(max(best[j], lo), hi)
        if extrapolate:
            for j in range(1, ny - 1):
                nxt[0, j] = 2.0 * nxt[1, j] - nxt[2, j]
                nxt[nx - 1, j] = 2.0 * nxt[nx - 2, j] - nxt[nx - 3, j]
            for i in range(nx):
                nxt[i, 0] = 2.0 * nxt[i, 1] - nxt[i, 2]
                nxt[i, ny - 1] = 2.0 * nxt[i, ny - 2] - nxt[i, ny - 3]
        else:
            for j in range(ny):
                nxt[0, j] = cur[0, j]
                nxt[nx - 1, j] = cur[nx - 1, j]
            for i in range(nx):
                nxt[i, 0] = cur[i, 0]
                nxt[i, ny - 1] = cur[i, ny - 1]
        cur, nxt = nxt, cur
    return cur


def _weights(G: GFunction, grid: Grid):
    """Per-scenario stencil weights (centre, diffusion neighbour, upwind up, upwind down)."""
    if G.dim != 1:
        raise DimensionError("the finite-difference solver supports d = 1 only")
    q, sigma2 = G.scenarios()
    diff_w = grid.dt * 0.5 * sigma2 / grid.dx**2
    up_w = grid.dt * np.abs(q) / grid.dx
    w_up = np.where(q > 0, up_w, 0.0)
    w_down = np.where(q < 0, up_w, 0.0)
    # exactly zero at the CFL limit; clip the rounding residue
    centre = np.maximum(1.0 - 2.0 * diff_w - up_w, 0.0)
    return centre, diff_w, w_up, w_down


def _run(values: np.ndarray, nsteps: int, G: GFunction, grid: Grid, boundary_mode: str):
    wc, wx, wu, wd = _weights(G, grid)
    use_max = G.form == "sup"
    extrapolate = boundary_mode == "linear_extrapolation"
    vals = np.array(values, dtype=np.float64)
    if vals.ndim == 1:
        # transport and diffusion share the single axis
        return _advance_1d(vals, nsteps, wc, wx + wd, wx + wu, use_max, extrapolate)
    return _advance_2d(vals, nsteps, wc, wx, wu, wd, use_max, extrapolate)


def _check_cfl(G: GFunction, grid: Grid) -> None:
    if not grid.cfl_ok(G):
        raise ConfigurationError(
            f"dt={grid.dt} violates the CFL bound {cfl_dt(G, grid.dx)} for this G"
        )


def advance(field: SolutionField, G: GFunction, t: float) -> SolutionField:
    """Run whole explicit steps from ``field.time`` to ``field.time + t``."""
    _check_cfl(G, field.grid)
    if field.time + t > field.grid.t_final * (1 + _STEP_TOL):
        raise DomainError(f"cannot advance past t_final={field.grid.t_final}")
    nsteps = field.grid.steps_for(t)
    vals = _run(field.values, nsteps, G, field.grid, field.boundary_mode)
    if not np.all(np.isfinite(vals)):
        raise NumericalBlowUpError(
            "non-finite value produced by the explicit step (CFL violated?)"
        )
    return replace(field, values=vals, time=field.time + nsteps * field.grid.dt)


def step(field: SolutionField, G: GFunction) -> SolutionField:
    return advance(field, G, field.grid.dt)


def _lipschitz_on_grid(values: np.ndarray, dx: float) -> float:
    slopes = [np.abs(np.diff(values, axis=a)).max(initial=0.0) / dx
              for a in range(values.ndim)]
    return float(max(slopes))


def truncation_bound(phi: TestFunction, values: np.ndarray, G: GFunction, grid: Grid,
                     t: float) -> float:
    """Heuristic banner: Lip(phi) * exp(-(L - cone)^2 / (2 sigma2_max t))."""
    lip = phi.lipschitz_bound
    if lip is None:
        lip = _lipschitz_on_grid(values, grid.dx)
    if t <= 0:
        return 0.0
    gap = grid.halfwidth - cone_width(G, t)
    if gap <= 0:
        return float(lip)
    s2 = G.sigma2_max
    if s2 == 0:
        return 0.0
    return float(lip * math.exp(-gap**2 / (2 * s2 * t)))


def initial_field(phi, grid: Grid, boundary_mode: str = "frozen_initial") -> SolutionField:
    x = grid.nodes()
    if grid.spatial_dim == 1:
        phi = as_test_function(phi, 1)
        vals = np.asarray(phi(x), dtype=float) * np.ones_like(x)
    else:
        phi = as_test_function(phi, 2)
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = np.asarray(phi(X, Y), dtype=float) * np.ones_like(X)
    return SolutionField(grid, vals, 0.0, boundary_mode)


def solve(phi, G: GFunction, t: float, grid: Grid,
          boundary_mode: str = "frozen_initial") -> SolutionField:
    """Reduced form: v_t = G(v_x, v_xx), v(0) = phi, on a 1-d grid."""
    if grid.spatial_dim != 1:
        raise DimensionError("solve works on a spatial_dim=1 grid; use solve_full for (x, y)")
    if t > grid.t_final * (1 + _STEP_TOL):
        raise DomainError(f"t={t} exceeds grid t_final={grid.t_final}")
    phi = as_test_function(phi, 1)
    field0 = initial_field(phi, grid, boundary_mode)
    out = advance(field0, G, t)
    return replace(out, truncation_error_bound=truncation_bound(phi, field0.values, G, grid, t))


def solve_full(phi, G: GFunction, t: float, grid: Grid,
               boundary_mode: str = "frozen_initial") -> SolutionField:
    """Full form: u_t = G(u_y, u_xx) on an (x, y) grid (values indexed [x, y])."""
    if grid.spatial_dim != 2:
        raise DimensionError("solve_full needs a spatial_dim=2 grid")
    if t > grid.t_final * (1 + _STEP_TOL):
        raise DomainError(f"t={t} exceeds grid t_final={grid.t_final}")
    phi = as_test_function(phi, 2)
    field0 = initial_field(phi, grid, boundary_mode)
    out = advance(field0, G, t)
    return replace(out, truncation_error_bound=truncation_bound(phi, field0.values, G, grid, t))


def gdist_expect(phi, G: GFunction, grid: Grid, boundary_mode: str = "frozen_initial",
                 return_field: bool = False):
    """Ẽ[phi(xi + zeta)] (arity 1) or Ẽ[phi(xi, zeta)] (arity 2): u at (1, 0[, 0])."""
    phi = as_test_function(phi)
    if phi.arity == 1:
        field = solve(phi, G, 1.0, grid.with_spatial_dim(1), boundary_mode)
    elif phi.arity == 2:
        field = solve_full(phi, G, 1.0, grid.with_spatial_dim(2), boundary_mode)
    else:
        raise DimensionError("gdist_expect takes phi of one or two arguments")
    val = field.at_origin()
    return (val, field) if return_field else val


def terminal_value(phi, G: GFunction, grid: Grid, t: float, horizon: float) -> SolutionField:
    """V(t, .) for V_t + G(DV, D^2V) = 0, V(horizon) = phi, via u(horizon - t)."""
    if not 0 <= t <= horizon:
        raise DomainError("need 0 <= t <= horizon")
    return solve(phi, G, horizon - t, grid)


# -- output -----------------------------------------------------------------------

def _atomic_write(path, write):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def field_sidecar(field: SolutionField) -> dict:
    return {"t": field.time, "dx": field.grid.dx, "dt": field.grid.dt,
            "L": field.grid.halfwidth, "boundary": field.boundary_mode,
            "trunc_bound": field.truncation_error_bound}


def write_field(field: SolutionField, path, sidecar_path=None) -> None:
    """CSV with header ``x[,y],value`` plus a JSON sidecar."""
    x = field.grid.nodes()

    def rows(fh):
        w = csv.writer(fh)
        if field.values.ndim == 1:
            w.writerow(["x", "value"])
            for xi, v in zip(x, field.values):
                w.writerow([repr(float(xi)), repr(float(v))])
        else:
            w.writerow(["x", "y", "value"])
            for i, xi in enumerate(x):
                for j, yj in enumerate(x):
                    w.writerow([repr(float(xi)), repr(float(yj)), repr(float(field.values[i, j]))])

    _atomic_write(path, rows)
    sidecar_path = sidecar_path or os.fspath(path) + ".json"
    _atomic_write(sidecar_path, lambda fh: json.dump(field_sidecar(field), fh, indent=2))


def trajectory(phi, G: GFunction, grid: Grid, t: float,
               boundary_mode: str = "frozen_initial") -> np.ndarray:
    """Every time level of the reduced solve, shape (steps + 1, n_nodes)."""
    if grid.spatial_dim != 1:
        raise DimensionError("trajectory is recorded for spatial_dim=1 grids")
    _check_cfl(G, grid)
    field0 = initial_field(phi, grid, boundary_mode)
    nsteps = grid.steps_for(t)
    wc, wx, wu, wd = _weights(G, grid)
    use_max = G.form == "sup"
    extrapolate = boundary_mode == "linear_extrapolation"
    out = np.empty((nsteps + 1, grid.n_nodes))
    out[0] = field0.values
    for k in range(nsteps):
        out[k + 1] = _advance_1d(out[k], 1, wc, wx + wd, wx + wu, use_max, extrapolate)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowUpError("non-finite value produced by the explicit step")
    return out


# -- discrete property suite ----------------------------------------------------

@dataclass
class PropertyOutcome:
    name: str
    trials: int = 0
    failures: int = 0
    max_violation: float = 0.0
    witnesses: list = None

    def __post_init__(self):
        self.witnesses = [] if self.witnesses is None else self.witnesses

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, violation: np.ndarray, tol_mask: np.ndarray, witness: dict):
        self.trials += 1
        self.max_violation = max(self.max_violation, float(np.max(violation, initial=0.0)))
        if np.any(tol_mask):
            self.failures += 1
            level, node = np.unravel_index(np.argmax(np.where(tol_mask, violation, -np.inf)),
                                           violation.shape)
            if len(self.witnesses) < 5:
                self.witnesses.append({**witness, "time_level": int(level), "node": int(node)})


PROPERTY_NAMES = ("comparison", "sub_additivity", "positive_homogeneity", "constants",
                  "semigroup", "concavity_inf_form")


def property_suite(G: GFunction, trials: int = 100, rng: Optional[np.random.Generator] = None,
                   halfwidth: float = 6.0, dx: float = 0.05,
                   split: tuple = (0.3, 0.7)) -> dict:
    """Randomised check of the discrete comparison/domination/concavity properties.

    Every property is checked at every time level on random piecewise-linear
    data: comparison and constants bit for bit, sub-additivity and inf-form
    concavity within 1e-10, homogeneity within 1e-12 relative, the semigroup
    split bit for bit.
    """
    from .testfunctions import random_polyline

    rng = rng or np.random.default_rng(0)
    G_inf = G.inf_form() if hasattr(G, "inf_form") else None
    if G_inf is None:
        from .gfunction import SupportG
        G_inf = SupportG(G.support_set(), form="inf")
    t_total = float(sum(split))
    grid = build_grid(G, halfwidth, dx, t_total, step_multiple=10)
    out = {name: PropertyOutcome(name) for name in PROPERTY_NAMES}

    def traj(f, H=G):
        return trajectory(f, H, grid, t_total)

    for trial in range(trials):
        phi = random_polyline(rng, n_nodes=int(rng.integers(3, 9)), span=8.0, amplitude=2.0)
        psi0 = random_polyline(rng, n_nodes=int(rng.integers(3, 9)), span=8.0, amplitude=2.0)
        bump = random_polyline(rng, n_nodes=5, span=6.0)
        psi = TestFunction(lambda x, a=phi, b=bump: a(x) + np.maximum(b(x), 0.0))
        x = grid.nodes()[::20]
        wit = {"trial": trial, "x": x.tolist(), "phi_init": phi(x).tolist(),
               "psi_init": psi(x).tolist(), "psi0_init": psi0(x).tolist()}

        Tp, Tq, T0 = traj(phi), traj(psi), traj(psi0)
        v = Tp - Tq
        out["comparison"].record(v, v > 0, wit)

        Ts = traj(lambda z: phi(z) + psi0(z))
        v = Ts - (Tp + T0)
        out["sub_additivity"].record(v, v > 1e-10, wit)

        for lam in (0.0, 2.5):
            Tl = traj(lambda z, lam=lam: lam * phi(z))
            v = np.abs(Tl - lam * Tp) / np.maximum(1.0, np.abs(lam * Tp))
            out["positive_homogeneity"].record(v, v > 1e-12, {**wit, "lambda": lam})

        c = float(rng.normal(scale=5.0))
        Tc = traj(lambda z, c=c: np.full_like(z, c))
        v = np.abs(Tc - c)
        out["constants"].record(v, v != 0, {**wit, "c": c})

        f0 = initial_field(phi, grid)
        whole = advance(f0, G, t_total).values
        parts = advance(advance(f0, G, split[0]), G, split[1]).values
        v = np.abs(whole - parts)[None, :]
        out["semigroup"].record(v, v != 0, wit)

        Ip, I0 = traj(phi, G_inf), traj(psi0, G_inf)
        for alpha in (0.25, 0.5, 0.75):
            Im = traj(lambda z, a=alpha: a * phi(z) + (1 - a) * psi0(z), G_inf)
            v = alpha * Ip + (1 - alpha) * I0 - Im
            out["concavity_inf_form"].record(v, v > 1e-10, {**wit, "alpha": alpha})
    return out
