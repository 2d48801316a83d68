"""Batch front-end: ``gexpect <command> --config path.json [--seed N] [--out path]``.

Exit codes: 0 success, 1 property failure, 2 validation error, 3 numerical
blow-up, 4 resource budget exceeded. Outputs are written to a temporary file
and renamed, so a failed run leaves no partial CSV behind.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigurationError,
    NumericalBlowUpError,
    ResourceBudgetError,
    ValidationError,
)
from .gfunction import GFunction, SupportG, SupportSetTheta, g_from_distribution
from .limit_harness import DEFAULT_N_LIST, IIDPair, clt_convergence_study, lln_distance_study
from .pde_solver import (
    _atomic_write,
    build_grid,
    field_sidecar,
    gdist_expect,
    property_suite,
    solve,
    solve_full,
    write_field,
)
from .scenario_core import DiscreteUncertainDistribution
from .testfunctions import from_spec

log = logging.getLogger("gexpect")

COMMANDS = ("solve", "gdist", "clt", "lln", "props")
SCHEMA_VERSION = 1
EXIT_OK, EXIT_PROPS, EXIT_VALIDATION, EXIT_BLOWUP, EXIT_BUDGET = 0, 1, 2, 3, 4


@dataclass
class ExperimentConfig:
    command: str
    payload: dict
    grid: dict = field(default_factory=dict)
    n_list: tuple = DEFAULT_N_LIST
    phi: object = None
    output_path: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict, command: Optional[str] = None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        schema = raw.get("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported config schema {schema!r}")
        cmd = command or raw.get("command")
        if cmd not in COMMANDS:
            raise ConfigurationError(f"unknown command {cmd!r}; expected one of {COMMANDS}")
        if command and raw.get("command") not in (None, command):
            raise ConfigurationError(
                f"config command {raw['command']!r} disagrees with CLI command {command!r}"
            )
        n_list = tuple(int(n) for n in raw.get("n_list", DEFAULT_N_LIST))
        if not n_list or any(n < 1 for n in n_list):
            raise ConfigurationError("n_list must hold positive integers")
        cfg = cls(cmd, raw, dict(raw.get("grid", {})), n_list, raw.get("phi"),
                  raw.get("output_path"), int(raw.get("seed", 0)))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        needs = {
            "solve": ("phi",), "gdist": ("phi",), "clt": ("phi", "X"),
            "lln": ("Y",), "props": (),
        }[self.command]
        for key in needs:
            if self.payload.get(key) is None:
                raise ConfigurationError(f"command {self.command!r} needs a {key!r} payload")
        if self.command in ("solve", "gdist", "props") and not (
            "G" in self.payload or "X" in self.payload
        ):
            raise ConfigurationError(f"command {self.command!r} needs a 'G' or 'X'/'Y' payload")


def _dist(obj) -> DiscreteUncertainDistribution:
    return DiscreteUncertainDistribution.from_json(obj)


def load_G(payload: dict) -> GFunction:
    form = payload.get("form", "sup")
    if "G" in payload:
        return SupportG(SupportSetTheta.from_json(payload["G"]), form=form)
    if "joint" in payload:
        induced = g_from_distribution(None, joint=_dist(payload["joint"]))
    else:
        Y = payload.get("Y")
        X = _dist(payload["X"])
        induced = g_from_distribution(
            X, _dist(Y) if Y else DiscreteUncertainDistribution.deterministic([0.0] * X.dim)
        )
    return SupportG(induced.support_set(), form=form)


def load_pair(payload: dict) -> IIDPair:
    mode = payload.get("joint_mode", "marginal_product")
    if mode == "joint_credal":
        return IIDPair(joint_mode=mode, joint=_dist(payload["joint"]))
    Y = payload.get("Y")
    return IIDPair(X=_dist(payload["X"]), Y=_dist(Y) if Y else None)


def _grid(cfg: ExperimentConfig, G: GFunction, spatial_dim: int):
    g = cfg.grid
    t = float(g.get("t", 1.0))
    return build_grid(G, float(g.get("L", 6.0)), float(g.get("dx", 0.02)), max(t, 1.0),
                      float(g.get("safety", 1.0)), spatial_dim, step_multiple=int(g.get("step_multiple", 1))), t


def _out(cfg: ExperimentConfig, default: str) -> str:
    return cfg.output_path or default


def _write_rows(path, header, rows):
    def body(fh):
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)

    _atomic_write(path, body)


def _write_json(path, obj):
    _atomic_write(path, lambda fh: json.dump(obj, fh, indent=2, sort_keys=True))


def _wants_full(cfg: ExperimentConfig) -> bool:
    if "full" in cfg.payload:
        return bool(cfg.payload["full"])
    name = cfg.phi if isinstance(cfg.phi, str) else (cfg.phi or {}).get("name", "")
    return str(name).startswith("quad")


def _cmd_solve(cfg: ExperimentConfig) -> int:
    G = load_G(cfg.payload)
    full = _wants_full(cfg) if "full" in cfg.payload else False
    grid, t = _grid(cfg, G, 2 if full else 1)
    phi = from_spec(cfg.phi, full=full)
    boundary = cfg.grid.get("boundary", "frozen_initial")
    fld = (solve_full if full else solve)(phi, G, t, grid, boundary)
    out = _out(cfg, "solve.csv")
    write_field(fld, out)
    log.info("wrote %s", out)
    return EXIT_OK


def _cmd_gdist(cfg: ExperimentConfig) -> int:
    G = load_G(cfg.payload)
    full = _wants_full(cfg)
    grid, _ = _grid(cfg, G, 2 if full else 1)
    phi = from_spec(cfg.phi, full=full)
    value, fld = gdist_expect(phi, G, grid, cfg.grid.get("boundary", "frozen_initial"),
                              return_field=True)
    out = _out(cfg, "gdist.csv")
    if full:
        _write_rows(out, ["x", "y", "value"], [[0.0, 0.0, repr(value)]])
    else:
        _write_rows(out, ["x", "value"], [[0.0, repr(value)]])
    _write_json(out + ".json", field_sidecar(fld))
    print(f"{value!r}")
    return EXIT_OK


def _cmd_clt(cfg: ExperimentConfig) -> int:
    pair = load_pair(cfg.payload)
    phi = from_spec(cfg.phi)
    G = pair.g_function()
    grid, _ = _grid(cfg, G, 1)
    report = clt_convergence_study(pair, phi, cfg.n_list, grid)
    report.write(_out(cfg, "clt.csv"))
    return EXIT_OK


def _cmd_lln(cfg: ExperimentConfig) -> int:
    Y = _dist(cfg.payload["Y"])
    report = lln_distance_study(Y, cfg.n_list)
    report.write(_out(cfg, "lln.csv"))
    return EXIT_OK


def run_props(cfg: ExperimentConfig) -> int:
    G = load_G(cfg.payload)
    trials = int(cfg.payload.get("trials", 100))
    g = cfg.grid
    results = property_suite(G, trials, np.random.default_rng(cfg.seed),
                             halfwidth=float(g.get("L", 6.0)), dx=float(g.get("dx", 0.05)))
    out = _out(cfg, "props.csv")
    rows = [[r.name, r.trials, r.failures, repr(r.max_violation), "PASS" if r.passed else "FAIL"]
            for r in results.values()]
    failed = [r for r in results.values() if not r.passed]
    if failed:
        _write_json(out + ".witness.json", {r.name: r.witnesses for r in failed})
        for r in failed:
            log.error("property %s failed in %d of %d trials", r.name, r.failures, r.trials)
    _write_rows(out, ["property", "trials", "failures", "max_violation", "status"], rows)
    return EXIT_PROPS if failed else EXIT_OK


HANDLERS = {"solve": _cmd_solve, "gdist": _cmd_gdist, "clt": _cmd_clt,
            "lln": _cmd_lln, "props": run_props}


def run(config: ExperimentConfig) -> int:
    try:
        return HANDLERS[config.command](config)
    except ResourceBudgetError as exc:
        log.error("resource budget exceeded: %s", exc)
        return EXIT_BUDGET
    except NumericalBlowUpError as exc:
        log.error("numerical blow-up: %s", exc)
        return EXIT_BLOWUP
    except ValidationError as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gexpect", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output CSV path (overrides config)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        cfg = ExperimentConfig.from_dict(raw, args.command)
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_VALIDATION
    except ValidationError as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except (KeyError, TypeError, ValueError) as exc:
        log.error("validation error: malformed config (%s)", exc)
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_path = args.out
    try:
        return run(cfg)
    except (KeyError, TypeError) as exc:
        log.error("validation error: malformed payload (%s)", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
