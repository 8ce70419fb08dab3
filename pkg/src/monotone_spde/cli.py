"""Command-line experiment harness.

Usage::

    monotone-spde <subcommand> [--config FILE] [--out DIR] [--seed N]
                               [--alpha A] [--workers N]

Subcommands: ``simulate-additive``, ``solve-multiplicative``,
``lambda-sweep``, ``refinement-study``, ``convex-check``.

The config file holds ``key = value`` lines; ``#`` starts a comment.  Each
run writes its CSV tables and a ``manifest`` into the output directory.  The
manifest is itself a valid config file, so ``--config <run>/manifest``
reproduces the run.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 resource guard.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .convex_core import IDENTITY_TOL, get_integrand, identity_residuals
from .diagnostics import (
    lambda_sweep,
    moment_report,
    refinement_study,
    table_to_csv,
)
from .discretization import Grid
from .errors import ConfigError, GuardViolation, ResourceGuardError, SolverError
from .evolution import SolverConfig, apriori_estimate, energy_residual, simulate
from .noise import get_coefficient
from .picard import solve_multiplicative

log = logging.getLogger("monotone_spde")

SUBCOMMANDS = (
    "simulate-additive",
    "solve-multiplicative",
    "lambda-sweep",
    "refinement-study",
    "convex-check",
)

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESOURCE = 2, 3, 4


@dataclass
class RunConfig:
    """Every recognized config key with its default."""

    subcommand: str = "simulate-additive"
    out: str = "run"
    # solver
    lam: float = 0.1
    dt: float = 5e-5
    T: float = 0.1
    cells: int = 16
    dim: int = 1
    modes: int = 16
    paths: int = 10
    seed: int = 0
    alpha: float | None = None
    tol: float = 1e-8
    max_iter: int = 50
    guard_override: bool = False
    workers: int = 0
    # integrand / noise
    integrand: str = "abs_quad"
    coefficient: str = "add_smooth"
    decay: float = 2.0
    amplitude: float = 1.0
    c0: float = 0.5
    c1: float = 1.0
    clamp: float = 10.0
    # initial datum
    initial: str = "sine"
    initial_amplitude: float = 1.0
    # studies
    lambdas: list = field(default_factory=lambda: [1.0, 0.5, 0.25, 0.125, 0.0625])
    halvings: int = 2
    refine: str = "time"
    samples: int = 10_000

    def solver_config(self, **overrides):
        params = dict(
            lam=self.lam, dt=self.dt, T=self.T, cells=self.cells, dim=self.dim,
            alpha=self.alpha, modes=self.modes, paths=self.paths, seed=self.seed,
            integrand=self.integrand, coefficient=self.coefficient,
            coef_params=self.coef_params(), tol=self.tol, max_iter=self.max_iter,
            guard_override=self.guard_override, workers=self.effective_workers,
        )
        params.update(overrides)
        return SolverConfig(**params)

    def coef_params(self):
        return {"decay": self.decay, "amplitude": self.amplitude,
                "c0": self.c0, "c1": self.c1, "clamp": self.clamp}

    @property
    def effective_workers(self):
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def initial_field(self, grid):
        a = self.initial_amplitude
        if self.initial == "zero":
            return np.zeros(grid.shape)
        if self.initial == "sine":
            return grid.field(lambda *xs: a * np.prod([np.sin(np.pi * x) for x in xs], axis=0))
        if self.initial == "two_mode":
            return grid.field(lambda *xs: a * np.prod(
                [np.sin(np.pi * x) + 0.5 * np.sin(3 * np.pi * x) for x in xs], axis=0))
        raise ConfigError("initial", f"unknown initial datum {self.initial!r}")

    def coefficient_factory(self):
        return lambda grid: get_coefficient(self.coefficient, grid, self.modes,
                                            **self.coef_params())

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "out":
                continue
            if value is None:
                continue
            if isinstance(value, list):
                value = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{_KEY_ALIASES_OUT.get(f.name, f.name)} = {value}")
        return "\n".join(lines) + "\n"


_KEY_ALIASES_IN = {"lambda": "lam", "M": "paths", "K": "modes", "horizon": "T"}
_KEY_ALIASES_OUT = {"lam": "lambda"}


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text, base=None):
    """Parse ``key = value`` lines into a :class:`RunConfig`."""
    cfg = base or RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        name = _KEY_ALIASES_IN.get(key, key)
        if name not in types:
            raise ConfigError(key, "unknown key")
        setattr(cfg, name, _convert(name, types[name], value, key))
    return cfg


def _convert(name, annotation, value, key):
    try:
        if name == "lambdas":
            return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
        if name == "alpha":
            return None if value.lower() in ("", "none", "auto") else float(value)
        if annotation in ("bool",):
            return _parse_bool(value)
        if annotation in ("int",):
            return int(value)
        if annotation in ("float",):
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None


def validate(cfg):
    """Reject bad configurations before any computation runs."""
    if cfg.subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}")
    if not cfg.lam > 0:
        raise ConfigError("lambda", "must be positive")
    if not cfg.dt > 0:
        raise ConfigError("dt", "must be positive")
    if not cfg.T > 0:
        raise ConfigError("T", "must be positive")
    if cfg.cells < 2:
        raise ConfigError("cells", "need at least 2 cells (positive h)")
    if cfg.dim not in (1, 2):
        raise ConfigError("dim", "must be 1 or 2")
    if cfg.modes < 1:
        raise ConfigError("modes", "must be positive")
    if cfg.paths < 1:
        raise ConfigError("paths", "must be positive")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be a nonnegative 64-bit integer")
    if cfg.alpha is not None and cfg.alpha < 0:
        raise ConfigError("alpha", "must be nonnegative")
    if cfg.workers < 0:
        raise ConfigError("workers", "must be nonnegative (0 = all cores)")
    if any(not lam > 0 for lam in cfg.lambdas):
        raise ConfigError("lambdas", "all entries must be positive")
    if cfg.refine not in ("time", "space"):
        raise ConfigError("refine", "must be 'time' or 'space'")
    if cfg.halvings < 0:
        raise ConfigError("halvings", "must be nonnegative")
    try:
        get_integrand(cfg.integrand, cfg.dim)
    except (KeyError, ValueError) as exc:
        raise ConfigError("integrand", str(exc)) from None
    probe = Grid.unit(2, cfg.dim)
    try:
        coefficient = get_coefficient(cfg.coefficient, probe, cfg.modes, **cfg.coef_params())
    except (KeyError, ValueError) as exc:
        raise ConfigError("coefficient", str(exc)) from None
    if cfg.subcommand == "simulate-additive" and coefficient.kind != "additive":
        raise ConfigError("coefficient", "simulate-additive needs an additive coefficient")
    cfg.initial_field(probe)
    return cfg


# -- subcommands ---------------------------------------------------------------

def _write(out, name, text):
    path = out / name
    path.write_text(text)
    return path


def _cmd_simulate_additive(cfg, out):
    scfg = cfg.solver_config()
    scfg.check_guard()
    G = scfg.coefficient_object()
    bundle = simulate(cfg.initial_field(scfg.grid), scfg, G)
    for row in range(len(bundle)):
        _write(out, f"path{int(bundle.paths[row])}.csv", bundle.path_csv(row))
    _write(out, "moments.csv", table_to_csv("moments", moment_report(bundle).rows()))
    res = energy_residual(bundle, bundle.times[-1])
    ap = apriori_estimate(bundle)
    _write(out, "energy.csv", table_to_csv("energy", [
        {"t": bundle.times[-1], "residual": res.value, "stderr": res.stderr}]))
    _write(out, "apriori.csv", table_to_csv("apriori", [{
        "sup_l2": ap.sup_l2, "viscous": ap.viscous, "dissipation": ap.dissipation,
        "rhs": ap.rhs, "ratio_sup": ap.ratios[0], "ratio_viscous": ap.ratios[1],
        "ratio_dissipation": ap.ratios[2], "kstar_stat": ap.kstar_stat,
        "kresolvent_stat": ap.kresolvent_stat, "energy_bound": ap.energy_bound}]))
    return {"guard_ok": scfg.guard_ok, "hs_tail": G.hs_tail()}


def _cmd_solve_multiplicative(cfg, out):
    scfg = cfg.solver_config()
    scfg.check_guard()
    B = scfg.coefficient_object()
    bundle, report = solve_multiplicative(cfg.initial_field(scfg.grid), scfg, B)
    _write(out, "picard.csv", report.to_csv())
    for row in range(len(bundle)):
        _write(out, f"path{int(bundle.paths[row])}.csv", bundle.path_csv(row))
    _write(out, "moments.csv", table_to_csv("moments", moment_report(bundle).rows()))
    return {"guard_ok": scfg.guard_ok, "alpha_used": report.alpha,
            "iterations": report.iterations, "hs_tail": B.hs_tail()}


def _cmd_lambda_sweep(cfg, out):
    scfg = cfg.solver_config()
    rows = lambda_sweep(scfg, cfg.lambdas, cfg.initial_field(scfg.grid),
                        cfg.coefficient_factory())
    _write(out, "lambda_sweep.csv", table_to_csv("lambda_sweep", rows))
    return {}


def _cmd_refinement_study(cfg, out):
    scfg = cfg.solver_config()
    rows = refinement_study(scfg, cfg.halvings, cfg.initial_field,
                            cfg.coefficient_factory(), mode=cfg.refine)
    _write(out, "refinement.csv", table_to_csv("refinement", rows))
    return {}


def _cmd_convex_check(cfg, out):
    k = get_integrand(cfg.integrand, cfg.dim)
    res = identity_residuals(k, count=cfg.samples, seed=cfg.seed)
    rows = [{"check": name, "value": value} for name, value in res.items()]
    _write(out, "convex_check.csv", table_to_csv("convex_check", rows))
    for name, value in res.items():
        print(f"{k.name:12s} {name:26s} {value: .3e}")
    ok = (res["fenchel_gap_min"] >= -IDENTITY_TOL
          and res["duality_residual_max"] <= IDENTITY_TOL
          and res["yosida_lipschitz_max"] <= 1 + 1e-12
          and res["resolvent_ratio_max"] <= 1 + 1e-12
          and res["reconstruction_max"] <= 1e-12)
    return {"identities_ok": ok}


_COMMANDS = {
    "simulate-additive": _cmd_simulate_additive,
    "solve-multiplicative": _cmd_solve_multiplicative,
    "lambda-sweep": _cmd_lambda_sweep,
    "refinement-study": _cmd_refinement_study,
    "convex-check": _cmd_convex_check,
}


def _manifest(cfg, extra, elapsed):
    head = [
        f"# monotone_spde {__version__} manifest",
        f"# python {platform.python_version()}, numpy {np.__version__}",
        f"# wall_clock_seconds {elapsed:.3f}",
    ]
    head += [f"# {k} {v}" for k, v in sorted(extra.items())]
    return "\n".join(head) + "\n" + cfg.to_text()


def run(cfg):
    """Validate, execute and record one run; returns the exit status."""
    validate(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    extra = _COMMANDS[cfg.subcommand](cfg, out)
    elapsed = time.perf_counter() - start
    _write(out, "manifest", _manifest(cfg, extra, elapsed))
    log.info("%s finished in %.2fs, outputs in %s", cfg.subcommand, elapsed, out)
    if extra.get("identities_ok") is False:
        return EXIT_NUMERICAL
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="monotone-spde", description=__doc__.split("\n")[0])
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS,
                   help="experiment to run (overrides the config key)")
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--alpha", type=float, help="Picard weight rate, skips calibration")
    p.add_argument("--workers", type=int, help="worker threads (0 = all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig()
        if args.config is not None:
            try:
                text = args.config.read_text()
            except OSError as exc:
                raise ConfigError("config", str(exc)) from None
            cfg = parse_config(text, cfg)
        for name in ("subcommand", "out", "seed", "alpha", "workers"):
            value = getattr(args, name)
            if value is not None:
                setattr(cfg, name, value)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardViolation as exc:
        print(f"config error: dt: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SolverError as exc:
        step = getattr(exc, "step", None)
        where = f" (step {step})" if step is not None else ""
        print(f"numerical abort{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
