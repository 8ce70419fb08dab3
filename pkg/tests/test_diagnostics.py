import math

import numpy as np
import pytest

from monotone_spde import diagnostics as dg
from monotone_spde import evolution as ev
from monotone_spde import noise
from monotone_spde.picard import solve_multiplicative
from monotone_spde.errors import GuardViolation, ResourceGuardError

CFG = ev.SolverConfig(lam=0.1, dt=1e-4, T=0.02, cells=8, paths=4, seed=6,
                      integrand="abs_quad", modes=4)


def sine(grid, j=1):
    return grid.field(lambda *xs: np.prod([np.sin(j * np.pi * x) for x in xs], axis=0))


def zero_factory(grid):
    return noise.ZeroNoise(grid)


def smooth_factory(grid):
    return noise.AdditiveSmooth(grid, modes=4)


def test_moments_zero():
    b = ev.simulate(np.zeros(CFG.grid.shape), CFG, noise.ZeroNoise(CFG.grid))
    rep = dg.moment_report(b)
    for row in rep.rows():
        assert row["mean"] == 0


def test_moments_sup_at_initial_time():
    cfg = CFG.replace(integrand="quad", paths=1)
    u0 = sine(cfg.grid)
    rep = dg.moment_report(ev.simulate(u0, cfg, noise.ZeroNoise(cfg.grid)))
    assert rep.sup_l2_sq.value == cfg.grid.inner(u0, u0)
    assert rep.point_estimates


def test_moments_multiplicative_run():
    cfg = CFG.replace(paths=100, coefficient="mult_nemytskii",
                      coef_params={"c0": 0.5, "c1": 1.0})
    bundle, _ = solve_multiplicative(sine(cfg.grid), cfg, cfg.coefficient_object())
    for row in dg.moment_report(bundle).rows():
        assert math.isfinite(row["mean"]) and math.isfinite(row["stderr"])
        assert row["stderr"] < 0.1 * abs(row["mean"])


def discrete_amplitude(lam, dt, cells, steps):
    h = 1 / cells
    mu = 4 / h**2 * math.sin(math.pi * h / 2) ** 2
    return ((1 - dt * mu / (1 + lam)) / (1 + lam * dt * mu)) ** steps


def test_sweep_quadratic_matches_closed_form():
    cfg = CFG.replace(integrand="quad", paths=1, dt=5e-5, T=0.05)
    lams = [1.0, 0.5, 0.25]
    u0 = sine(cfg.grid)
    rows = dg.lambda_sweep(cfg, lams, u0, zero_factory)
    norm = math.sqrt(cfg.grid.inner(u0, u0))
    for row, nxt in zip(rows, lams[1:]):
        expect = abs(discrete_amplitude(row["lam"], cfg.dt, cfg.cells, cfg.steps)
                     - discrete_amplitude(nxt, cfg.dt, cfg.cells, cfg.steps)) * norm
        assert row["diff_next"] == pytest.approx(expect, abs=1e-10)
    assert rows[-1]["diff_next"] is None


def test_sweep_statistics_below_bound():
    cfg = CFG.replace(dt=2e-5, paths=8)
    rows = dg.lambda_sweep(cfg, [1.0, 0.1], sine(cfg.grid), smooth_factory)
    for row in rows:
        assert row["kstar_stat"] <= row["energy_bound"]
        assert row["kresolvent_stat"] <= row["energy_bound"]


def test_sweep_single_lambda():
    rows = dg.lambda_sweep(CFG, [0.1], sine(CFG.grid), zero_factory)
    assert len(rows) == 1
    assert "diff_next" not in rows[0]


def test_sweep_guard():
    with pytest.raises(GuardViolation):
        dg.lambda_sweep(CFG, [0.1, 0.001], sine(CFG.grid), zero_factory)


def init(grid):
    return sine(grid)


def test_refinement_orders_quadratic():
    cfg = CFG.replace(integrand="quad", paths=1, dt=2e-4, T=0.1)
    rows = dg.refinement_study(cfg, 2, init, zero_factory, mode="time")
    assert rows[2]["order_terminal"] == pytest.approx(1.0, abs=0.1)
    rows = dg.refinement_study(cfg, 2, init, zero_factory, mode="space")
    assert [r["cells"] for r in rows] == [8, 16, 32]
    assert rows[2]["order_terminal"] == pytest.approx(2.0, abs=0.2)


def test_refinement_zero_problem():
    rows = dg.refinement_study(CFG, 2, lambda g: np.zeros(g.shape), zero_factory)
    assert all(r["energy_residual"] == 0 for r in rows)


def test_refinement_residual_decreases_multivalued():
    cfg = CFG.replace(paths=1, dt=2e-4, T=0.1)
    rows = dg.refinement_study(cfg, 3, init, zero_factory)
    res = [abs(r["energy_residual"]) for r in rows]
    assert all(a > b for a, b in zip(res, res[1:]))


def test_refinement_resource_guard():
    with pytest.raises(ResourceGuardError):
        dg.refinement_study(CFG, 6, init, zero_factory)
    with pytest.raises(ResourceGuardError):
        dg.refinement_study(CFG.replace(cells=128), 3, init, zero_factory, mode="space")


def test_weak_continuity():
    cfg = CFG.replace(paths=3)
    b = ev.simulate(sine(cfg.grid), cfg, noise.AdditiveSmooth(cfg.grid, modes=4),
                    store_trajectory=True)
    inc = dg.weak_continuity_increments(b, [sine(cfg.grid), sine(cfg.grid, 2)])
    assert len(inc) == 2
    assert all(0 <= v < 0.1 for v in inc)
    with pytest.raises(ValueError):
        dg.weak_continuity_increments(ev.simulate(sine(cfg.grid), cfg,
                                                  noise.ZeroNoise(cfg.grid)), [])


def test_table_csv_golden():
    rows = [{"level": 0, "dt": 0.5, "order": None, "ok": True},
            {"level": 1, "dt": 0.25, "order": 1.0, "ok": False}]
    assert dg.table_to_csv("demo", rows) == (
        "# schema=demo/1\nlevel,dt,order,ok\n0,0.5,,true\n1,0.25,1.0,false\n")
    assert dg.table_to_csv("demo", []) == "# schema=demo/1\n"
