"""Moment reports, lambda sweeps and refinement studies.

Everything here post-processes :class:`~monotone_spde.evolution.SolutionBundle`
objects or drives the solvers with common random numbers.  Tables are
lists of dicts with a fixed column order and serialize to CSV with a
``# schema=<kind>/<version>`` header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GuardViolation, ResourceGuardError
from .evolution import Estimate, apriori_estimate, energy_residual, simulate
from .picard import solve_multiplicative

MAX_NODES_PER_AXIS = 512
MAX_STEPS = 10**6
MAX_HALVINGS = 5


@dataclass
class MomentReport:
    """Integrability quantities of a solution, each with a Monte Carlo error."""

    sup_l2_sq: Estimate       # sup_t E||u(t)||^2
    w11_time: Estimate        # E int ||u||_{W^{1,1}_0} dt
    eta_l1_time: Estimate     # E int ||eta||_{L^1} dt
    energy_time: Estimate     # E int (||k(grad u)||_{L^1} + ||k*(eta)||_{L^1}) dt
    paths: int

    @property
    def point_estimates(self):
        return self.paths < 2

    def rows(self):
        return [
            {"quantity": name, "mean": est.value, "stderr": est.stderr}
            for name, est in (
                ("sup_l2_sq", self.sup_l2_sq),
                ("w11_time", self.w11_time),
                ("eta_l1_time", self.eta_l1_time),
                ("energy_time", self.energy_time),
            )
        ]


def moment_report(bundle):
    if len(bundle) == 0:
        raise ValueError("empty bundle")
    d = bundle.diagnostics
    dt = bundle.dt

    def integral(values):
        return dt * np.sum(values[:, :-1], axis=1)

    mean_sq = np.mean(d["u_sq"], axis=0)
    m_star = int(np.argmax(mean_sq))
    return MomentReport(
        sup_l2_sq=Estimate.of(d["u_sq"][:, m_star]),
        w11_time=Estimate.of(integral(d["u_l1"] + d["grad_l1"])),
        eta_l1_time=Estimate.of(integral(d["eta_l1"])),
        energy_time=Estimate.of(integral(d["k_grad"] + d["kstar_eta"])),
        paths=len(bundle),
    )


def weak_continuity_increments(bundle, test_fields):
    """``max_m |E<u_{m+1} - u_m, phi>|`` for each test field ``phi``.

    Needs a bundle with a stored trajectory.
    """
    if bundle.trajectory is None:
        raise ValueError("bundle has no stored trajectory")
    grid = bundle.grid
    mean_traj = np.mean(bundle.trajectory, axis=0)
    out = []
    for phi in test_fields:
        pairing = grid.inner(mean_traj, phi)
        out.append(float(np.max(np.abs(np.diff(pairing)))))
    return out


def table_to_csv(kind, rows, version=1):
    if not rows:
        return f"# schema={kind}/{version}\n"
    cols = list(rows[0])
    lines = [f"# schema={kind}/{version}", ",".join(cols)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _l2_omega_x(grid, a, b):
    diff = a - b
    axes = tuple(range(-grid.dim, 0))
    return math.sqrt(float(np.mean(grid.node_weight * np.sum(diff * diff, axis=axes))))


def _run(u0, cfg, coefficient):
    if coefficient.kind == "multiplicative":
        bundle, _ = solve_multiplicative(u0, cfg, coefficient)
        return bundle
    return simulate(u0, cfg, coefficient)


def lambda_sweep(cfg, lams, u0, coefficient_factory):
    """Run the regularized problem at each ``lam`` with common random numbers.

    Args:
        cfg: base configuration; its ``dt`` must satisfy the guard at ``min(lams)``.
        lams: regularization parameters, in sweep order.
        u0: initial field (shared by all paths).
        coefficient_factory: ``grid -> DiffusionCoefficient``.

    Returns:
        list of row dicts, one per ``lam``.  ``diff_next`` is
        ``||u_lam(T) - u_next(T)||_{L^2_{omega,x}}`` against the following
        entry (empty on the last row, absent for a single ``lam``).
    """
    lams = [float(x) for x in lams]
    if not lams:
        raise ValueError("empty lambda list")
    probe = cfg.replace(lam=min(lams))
    if not probe.guard_ok and not cfg.guard_override:
        raise GuardViolation(
            f"dt={cfg.dt:g} violates the stability guard at lam={min(lams):g} "
            f"(limit {probe.guard_limit:g})")
    coefficient = coefficient_factory(cfg.grid)
    finals, rows = [], []
    for lam in lams:
        bundle = _run(u0, cfg.replace(lam=lam), coefficient)
        ap = apriori_estimate(bundle)
        ratios = ap.ratios
        finals.append(bundle.u_final)
        rows.append({
            "lam": lam,
            "diff_next": None,
            "kstar_stat": ap.kstar_stat,
            "kresolvent_stat": ap.kresolvent_stat,
            "dissipation": ap.dissipation,
            "energy_bound": ap.energy_bound,
            "ratio_sup": ratios[0],
            "ratio_viscous": ratios[1],
            "ratio_dissipation": ratios[2],
            "ratio_total": ap.total_ratio,
        })
    for i in range(len(lams) - 1):
        rows[i]["diff_next"] = _l2_omega_x(cfg.grid, finals[i], finals[i + 1])
    if len(rows) == 1:
        del rows[0]["diff_next"]
    return rows


def _check_resources(cfg):
    if cfg.cells > MAX_NODES_PER_AXIS:
        raise ResourceGuardError(f"grid of {cfg.cells} cells per axis exceeds {MAX_NODES_PER_AXIS}")
    if cfg.steps > MAX_STEPS:
        raise ResourceGuardError(f"{cfg.steps} time steps exceed {MAX_STEPS}")


def refinement_study(cfg, halvings, initial, coefficient_factory, mode="time"):
    """Energy residual and terminal moments across grid refinements.

    ``mode="time"`` halves ``dt`` at fixed ``h``; ``mode="space"`` halves ``h``
    and quarters ``dt`` (keeping the stability guard ratio).  The Wiener
    increments of every level are sums of the finest level's increments, so
    all levels see the same Brownian path.

    Args:
        initial: ``grid -> field`` producing the initial datum on each grid.
        coefficient_factory: ``grid -> DiffusionCoefficient``.

    Returns:
        list of row dicts; ``order_*`` columns are the observed orders
        ``log2(|q_{l-1} - q_l| / |q_l - q_{l+1}|)`` of the terminal second
        moment, filled from the third level on.
    """
    if not 0 <= halvings <= MAX_HALVINGS:
        raise ResourceGuardError(f"halvings must lie in [0, {MAX_HALVINGS}]")
    if mode not in ("time", "space"):
        raise ValueError("mode must be 'time' or 'space'")
    factor = 2 if mode == "time" else 4
    levels = []
    for lev in range(halvings + 1):
        cells = cfg.cells * (2**lev if mode == "space" else 1)
        lcfg = cfg.replace(
            cells=cells,
            dt=cfg.dt / factor**lev,
            substeps=cfg.substeps * factor ** (halvings - lev),
        )
        _check_resources(lcfg)
        levels.append(lcfg)

    rows = []
    for lev, lcfg in enumerate(levels):
        coefficient = coefficient_factory(lcfg.grid)
        bundle = _run(initial(lcfg.grid), lcfg, coefficient)
        res = energy_residual(bundle, bundle.times[-1])
        terminal = Estimate.of(bundle.diagnostics["u_sq"][:, -1])
        rows.append({
            "level": lev,
            "cells": lcfg.cells,
            "dt": lcfg.dt,
            "energy_residual": res.value,
            "energy_residual_se": res.stderr,
            "terminal_l2_sq": terminal.value,
            "terminal_l2_sq_se": terminal.stderr,
            "sup_l2_sq": float(np.max(np.mean(bundle.diagnostics["u_sq"], axis=0))),
            "order_terminal": None,
            "order_residual": None,
        })
    for i in range(2, len(rows)):
        a = rows[i - 2]["terminal_l2_sq"] - rows[i - 1]["terminal_l2_sq"]
        b = rows[i - 1]["terminal_l2_sq"] - rows[i]["terminal_l2_sq"]
        rows[i]["order_terminal"] = _order(a, b, 2)
    for i in range(1, len(rows)):
        rows[i]["order_residual"] = _order(
            rows[i - 1]["energy_residual"], rows[i]["energy_residual"], 2)
    return rows


def _order(coarse, fine, base):
    if coarse == 0 or fine == 0:
        return float("nan")
    return math.log(abs(coarse) / abs(fine), base)
