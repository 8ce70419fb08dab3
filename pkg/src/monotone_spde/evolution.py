"""Time stepping for the Yosida-regularized equation with additive noise.

The regularized problem is

    du - div gamma_lam(grad u) dt - lam * Lap u dt = G(t) dW

discretized by Euler-Maruyama on the Yosida drift and implicit Euler on the
viscosity term:

    u_{m+1} = (I - lam*dt*Lap_h)^{-1} [u_m + dt*div_h gamma_lam(grad_h u_m) + G(t_m) dW_m].

``gamma_lam`` is ``1/lam``-Lipschitz, so the explicit drift is stable when
``dt <= lam h^2 / (4n)``.

Paths are simulated as a batch along a leading axis.  Every arithmetic
operation is row-local, so a path gives bitwise the same trajectory
whether it is run alone or inside any batch.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import noise as noise_mod
from .convex_core import conjugate_eval, get_integrand
from .discretization import Grid
from .errors import BlowUpError, GuardViolation

DIAGNOSTIC_COLUMNS = (
    "u_sq",           # ||u||^2
    "eta_dot_grad",   # int eta . grad u
    "grad_sq",        # ||grad u||^2
    "hs_sq",          # ||G||_HS^2 at the left endpoint
    "gap",            # int k(grad u) + k*(eta) - eta . grad u
    "k_grad",         # int k(grad u)
    "kstar_eta",      # int k*(eta)
    "k_resolvent",    # int k(prox(grad u))
    "selection_gap",  # int k(p) + k*(eta) - eta . p, p = prox(grad u)
    "u_l1",
    "grad_l1",
    "eta_l1",
)

TIME_CHUNK = 512


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters of one experiment.

    ``coef_params`` holds the keyword parameters of the noise coefficient
    (``decay``, ``amplitude``, ``c0``, ``c1``, ``clamp``).
    """

    lam: float = 0.1
    dt: float = 1e-4
    T: float = 0.1
    cells: int = 16
    dim: int = 1
    alpha: float | None = None
    modes: int = 16
    paths: int = 1
    seed: int = 0
    integrand: str = "quad"
    coefficient: str = "add_smooth"
    coef_params: dict = field(default_factory=dict)
    tol: float = 1e-8
    max_iter: int = 50
    guard_override: bool = False
    workers: int = 1
    substeps: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    def replace(self, **changes):
        return replace(self, **changes)

    @cached_property
    def grid(self):
        return Grid.unit(self.cells, self.dim)

    @cached_property
    def k(self):
        return get_integrand(self.integrand, self.dim)

    @property
    def steps(self):
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    @property
    def times(self):
        return self.dt * np.arange(self.steps + 1)

    @property
    def guard_limit(self):
        return self.lam * self.grid.h**2 / (4 * self.dim)

    @property
    def guard_ok(self):
        return self.dt <= self.guard_limit * (1 + 1e-12)

    def check_guard(self):
        if not self.guard_ok and not self.guard_override:
            raise GuardViolation(
                f"dt={self.dt:g} exceeds stability guard lam*h^2/(4n)={self.guard_limit:g}"
            )

    def driver(self, modes=None):
        return noise_mod.WienerDriver(self.seed, modes or self.modes, self.dt, self.substeps)

    def coefficient_object(self):
        return noise_mod.get_coefficient(self.coefficient, self.grid, self.modes,
                                         **self.coef_params)

    def as_dict(self):
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out


class Estimate(NamedTuple):
    """Monte Carlo mean with its standard error (``nan`` for one sample)."""

    value: float
    stderr: float

    @classmethod
    def of(cls, samples):
        samples = np.asarray(samples, dtype=float)
        m = samples.size
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
        return cls(mean, se)


@dataclass
class SolutionBundle:
    """Trajectories and per-step diagnostics for a set of paths.

    ``diagnostics[name]`` has shape ``(paths, steps + 1)``; entry ``m``
    refers to time ``t_m``.  ``trajectory`` (when stored) has shape
    ``(paths, steps + 1) + grid.shape``.
    """

    config: SolverConfig
    paths: np.ndarray
    times: np.ndarray
    u0: np.ndarray
    u_final: np.ndarray
    diagnostics: dict
    trajectory: np.ndarray | None = None
    eta_final: np.ndarray | None = None

    @property
    def grid(self):
        return self.config.grid

    @property
    def dt(self):
        return self.config.dt

    def __len__(self):
        return len(self.paths)

    def step_index(self, t):
        m = t / self.dt
        idx = int(round(m))
        if abs(m - idx) > 1e-6 or idx < 0 or idx > len(self.times) - 1:
            raise ValueError(f"t={t} is not on the time grid [0, {self.times[-1]}]")
        return idx

    def select(self, rows):
        rows = np.asarray(rows)
        return SolutionBundle(
            config=self.config,
            paths=self.paths[rows],
            times=self.times,
            u0=self.u0[rows],
            u_final=self.u_final[rows],
            diagnostics={k: v[rows] for k, v in self.diagnostics.items()},
            trajectory=None if self.trajectory is None else self.trajectory[rows],
            eta_final=None if self.eta_final is None else self.eta_final[rows],
        )

    def path_csv(self, row):
        cols = ("t",) + DIAGNOSTIC_COLUMNS
        lines = ["# schema=trajectory/1", ",".join(cols)]
        for m, t in enumerate(self.times):
            vals = [t] + [self.diagnostics[c][row, m] for c in DIAGNOSTIC_COLUMNS]
            lines.append(",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"


# -- single step --------------------------------------------------------------

def yosida_drift(grid, k, lam, u):
    """Return ``(grad u, prox point, eta = gamma_lam(grad u))`` for a batch of fields."""
    g = grid.gradient(u)
    p = k.prox(lam, g)
    eta = (g - p) / lam
    return g, p, eta


def step_regularized(u, t, cfg, noise_increment):
    """One semi-implicit step; ``noise_increment`` is the field ``G(t) dW``."""
    grid = cfg.grid
    _, _, eta = yosida_drift(grid, cfg.k, cfg.lam, u)
    rhs = u + cfg.dt * grid.divergence(eta) + noise_increment
    return grid.laplacian_solve(rhs, cfg.lam * cfg.dt)


def _diagnostics(grid, k, g, p, eta, u, hs_sq, out, m):
    axes = tuple(range(-grid.dim, 0))
    dot = (eta * g).sum(axis=-1)
    g_sq = (g * g).sum(axis=-1)
    k_p = k(p)
    ks_e = conjugate_eval(k, eta)
    k_g = k(g)
    per_site = np.stack([
        dot,
        g_sq,
        k_g + ks_e - dot,
        k_g,
        ks_e,
        k_p,
        k_p + ks_e - (eta * p).sum(axis=-1),
        np.sqrt(g_sq),
        np.sqrt((eta * eta).sum(axis=-1)),
    ])
    sums = grid.site_weight * per_site.sum(axis=-1)
    for name, row in zip(_SITE_COLUMNS, sums):
        out[name][:, m] = row
    out["u_sq"][:, m] = grid.node_weight * (u * u).sum(axis=axes)
    out["u_l1"][:, m] = grid.node_weight * np.abs(u).sum(axis=axes)
    out["hs_sq"][:, m] = hs_sq


_SITE_COLUMNS = ("eta_dot_grad", "grad_sq", "gap", "k_grad", "kstar_eta",
                 "k_resolvent", "selection_gap", "grad_l1", "eta_l1")


def _hs_sq_batch(grid, fields):
    axes = tuple(range(-grid.dim, 0))
    return np.sum(grid.node_weight * np.sum(fields * fields, axis=axes), axis=-1)


def simulate(u0, cfg, coefficient, paths=None, frozen=None, store_trajectory=False,
             diagnostics=True):
    """Simulate the regularized equation for a batch of paths.

    Args:
        u0: initial field, either one field (shared) or one per path.
        cfg: :class:`SolverConfig`.
        coefficient: a :class:`~monotone_spde.noise.DiffusionCoefficient`.
            Additive coefficients ignore ``frozen``; multiplicative ones are
            evaluated along ``frozen`` (required), i.e. ``G(t_m) = B(t_m, v_m)``.
        paths: path indices (keys of the Wiener increments).
        frozen: trajectory ``v`` of shape ``(paths, steps+1) + grid.shape``.
        store_trajectory: keep every ``u_m``.
        diagnostics: compute the per-step diagnostic columns.

    Returns:
        SolutionBundle
    """
    cfg.check_guard()
    paths = np.arange(cfg.paths) if paths is None else np.asarray(paths, dtype=int)
    grid = cfg.grid
    u0 = np.asarray(u0, dtype=float)
    if u0.shape == grid.shape:
        u0 = np.broadcast_to(u0, (len(paths),) + grid.shape).copy()
    if u0.shape != (len(paths),) + grid.shape:
        raise ValueError(f"u0 shape {u0.shape} does not match {len(paths)} paths on {grid.shape}")
    if coefficient.kind == "multiplicative" and frozen is None:
        raise ValueError("multiplicative coefficient needs a frozen trajectory")

    workers = max(1, int(cfg.workers))
    if workers > 1 and len(paths) > 1:
        chunks = np.array_split(np.arange(len(paths)), min(workers, len(paths)))
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(
                lambda rows: _simulate_batch(
                    u0[rows], cfg, coefficient, paths[rows],
                    None if frozen is None else frozen[rows],
                    store_trajectory, diagnostics),
                chunks))
        return _concat(parts)
    return _simulate_batch(u0, cfg, coefficient, paths, frozen, store_trajectory, diagnostics)


def _simulate_batch(*args):
    # overflow is caught by the finiteness check below, so keep numpy quiet
    with np.errstate(over="ignore", invalid="ignore"):
        return _simulate_rows(*args)


def _simulate_rows(u0, cfg, coefficient, paths, frozen, store_trajectory, want_diag):
    grid, k, lam, dt = cfg.grid, cfg.k, cfg.lam, cfg.dt
    steps = cfg.steps
    times = cfg.times
    M = len(paths)
    driver = cfg.driver(coefficient.K)
    additive = coefficient.kind != "multiplicative"
    if additive:
        fields0 = coefficient.modes(0.0, None)
        hs_const = float(_hs_sq_batch(grid, fields0))
    zero_noise = additive and not np.any(fields0)

    diag = {c: np.zeros((M, steps + 1)) for c in DIAGNOSTIC_COLUMNS} if want_diag else {}
    traj = np.empty((M, steps + 1) + grid.shape) if store_trajectory else None
    u = u0.copy()
    if traj is not None:
        traj[:, 0] = u

    dW = None
    for m in range(steps + 1):
        t = times[m]
        g, p, eta = yosida_drift(grid, k, lam, u)
        if additive:
            fields_m = fields0
            hs = hs_const
        else:
            fields_m = coefficient.modes(t, frozen[:, m])
            hs = _hs_sq_batch(grid, fields_m)
        if want_diag:
            _diagnostics(grid, k, g, p, eta, u, hs, diag, m)
        if m == steps:
            break
        if zero_noise:
            inc = 0.0
        else:
            chunk = m % TIME_CHUNK
            if chunk == 0:
                stop = min(m + TIME_CHUNK, steps)
                dW = driver.batch(paths, m, stop)
            inc = noise_mod.combine_modes(fields_m, dW[:, chunk], grid.dim)
        rhs = u + dt * grid.divergence(eta) + inc
        u = grid.laplacian_solve(rhs, lam * dt)
        if not np.all(np.isfinite(u)):
            bad = np.nonzero(~np.all(np.isfinite(u.reshape(M, -1)), axis=1))[0]
            raise BlowUpError(
                f"non-finite state at step {m + 1} (t={times[m + 1]:g}) on path {paths[bad[0]]}",
                step=m + 1, path=int(paths[bad[0]]))
        if traj is not None:
            traj[:, m + 1] = u

    _, _, eta = yosida_drift(grid, k, lam, u)
    return SolutionBundle(
        config=cfg, paths=paths, times=times, u0=u0.copy(), u_final=u,
        diagnostics=diag, trajectory=traj, eta_final=eta,
    )


def _concat(parts):
    first = parts[0]
    return SolutionBundle(
        config=first.config,
        paths=np.concatenate([p.paths for p in parts]),
        times=first.times,
        u0=np.concatenate([p.u0 for p in parts]),
        u_final=np.concatenate([p.u_final for p in parts]),
        diagnostics={k: np.concatenate([p.diagnostics[k] for p in parts])
                     for k in first.diagnostics},
        trajectory=None if first.trajectory is None
        else np.concatenate([p.trajectory for p in parts]),
        eta_final=np.concatenate([p.eta_final for p in parts]),
    )


def solve_additive(u0, cfg, G, paths=None, store_trajectory=False):
    """Full trajectories of the additive-noise regularized problem.

    ``paths`` defaults to ``range(cfg.paths)``; a single index is accepted.
    """
    if G.kind != "additive":
        raise ValueError("solve_additive needs an additive coefficient")
    if paths is not None and np.ndim(paths) == 0:
        paths = [int(paths)]
    return simulate(u0, cfg, G, paths=paths, store_trajectory=store_trajectory)


# -- estimates over a path set -------------------------------------------------

def _time_integral(values, dt, upto=None):
    """Left-endpoint rule: ``sum_{j < upto} dt * values[:, j]``."""
    upto = values.shape[1] - 1 if upto is None else upto
    return dt * np.sum(values[:, :upto], axis=1)


def energy_residual(bundle, t, alpha=0.0, viscosity=True):
    """Monte Carlo estimate of the energy-identity residual at time ``t``.

    With ``y = e^{-alpha t} u`` the residual is

        E||y(t)||^2 + 2 alpha E int ||y||^2 + 2 E int int e^{-2 alpha s}
        (eta . grad u + lam |grad u|^2) - E||u_0||^2 - E int e^{-2 alpha s} ||G||_HS^2

    with left-endpoint time quadrature.  ``viscosity=False`` drops the
    ``lam |grad u|^2`` contribution (the identity of the limit problem).
    """
    if len(bundle) == 0:
        raise ValueError("empty bundle")
    if t > bundle.times[-1] + 1e-12:
        raise ValueError("t beyond horizon")
    m = bundle.step_index(t)
    d = bundle.diagnostics
    dt = bundle.dt
    w = np.exp(-2.0 * alpha * bundle.times)[None, :]
    dissip = d["eta_dot_grad"]
    if viscosity:
        dissip = dissip + bundle.config.lam * d["grad_sq"]
    per_path = (
        w[:, m] * d["u_sq"][:, m]
        + _time_integral(2.0 * alpha * w * d["u_sq"], dt, m)
        + _time_integral(2.0 * w * dissip, dt, m)
        - d["u_sq"][:, 0]
        - _time_integral(w * d["hs_sq"], dt, m)
    )
    return Estimate.of(per_path)


@dataclass
class AprioriReport:
    """Left-hand terms of the a priori estimate against its right side."""

    sup_l2: float         # ||u||_{L^2_omega C_t L^2_x}
    viscous: float        # sqrt(lam) ||grad u||_{L^2_{t,omega,x}}
    dissipation: float    # ||gamma_lam(grad u) . grad u||_{L^1_{t,omega,x}}
    rhs: float            # ||u0||_{L^2_{omega,x}} + ||G||_{L^2_{t,omega} HS}
    energy_bound: float   # E||u0||^2 + E int ||G||_HS^2
    kstar_stat: float     # E int int k*(gamma_lam(grad u))
    kresolvent_stat: float  # E int int k((I + lam gamma)^{-1} grad u)

    @property
    def lhs_terms(self):
        return (self.sup_l2, self.viscous, self.dissipation)

    @property
    def ratios(self):
        if self.rhs == 0:
            return tuple(0.0 for _ in self.lhs_terms)
        return tuple(v / self.rhs for v in self.lhs_terms)

    @property
    def total_ratio(self):
        return 0.0 if self.rhs == 0 else sum(self.lhs_terms) / self.rhs


def apriori_estimate(bundle):
    if len(bundle) == 0:
        raise ValueError("empty bundle")
    d = bundle.diagnostics
    dt = bundle.dt
    lam = bundle.config.lam
    noise_int = float(np.mean(_time_integral(d["hs_sq"], dt)))
    u0_sq = float(np.mean(d["u_sq"][:, 0]))
    return AprioriReport(
        sup_l2=math.sqrt(float(np.mean(np.max(d["u_sq"], axis=1)))),
        viscous=math.sqrt(lam * float(np.mean(_time_integral(d["grad_sq"], dt)))),
        dissipation=float(np.mean(_time_integral(np.abs(d["eta_dot_grad"]), dt))),
        rhs=math.sqrt(u0_sq) + math.sqrt(noise_int),
        energy_bound=u0_sq + noise_int,
        kstar_stat=float(np.mean(_time_integral(d["kstar_eta"], dt))),
        kresolvent_stat=float(np.mean(_time_integral(d["k_resolvent"], dt))),
    )
