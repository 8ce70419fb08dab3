import math

import numpy as np
import pytest

from monotone_spde import evolution as ev
from monotone_spde import noise
from monotone_spde.errors import BlowUpError, GuardViolation


def sine(grid, j=1, amp=1.0):
    return grid.field(lambda *xs: amp * np.prod([np.sin(j * np.pi * x) for x in xs], axis=0))


def one_mode(grid, amp=1.0):
    return noise.AdditiveModes(grid, amp * sine(grid)[None])


BASE = ev.SolverConfig(lam=0.1, dt=5e-5, T=0.02, cells=16, integrand="abs_quad")


def test_zero_stays_zero():
    cfg = BASE.replace(paths=2)
    G = noise.ZeroNoise(cfg.grid)
    b = ev.simulate(np.zeros(cfg.grid.shape), cfg, G, store_trajectory=True)
    assert not np.any(b.trajectory)
    assert all(not np.any(v) for v in b.diagnostics.values())


def test_quadratic_matches_discrete_heat_decay():
    lam, cells = 0.05, 32
    h = 1 / cells
    dt = lam * h * h / 8
    cfg = ev.SolverConfig(lam=lam, dt=dt, T=0.005, cells=cells, integrand="quad")
    u0 = sine(cfg.grid)
    b = ev.simulate(u0, cfg, noise.ZeroNoise(cfg.grid), diagnostics=False)
    mu = 4 / h**2 * math.sin(math.pi * h / 2) ** 2
    g = (1 - dt * mu / (1 + lam)) / (1 + lam * dt * mu)
    amp = cfg.grid.inner(b.u_final[0], u0) / cfg.grid.inner(u0, u0)
    assert amp == pytest.approx(g**cfg.steps, abs=1e-10)
    exact = math.exp(-math.pi**2 * (1 / (1 + lam) + lam) * cfg.steps * dt)
    assert amp == pytest.approx(exact, rel=0.05)


def test_single_step_from_zero_is_solved_noise():
    cfg = BASE
    G = noise.AdditiveSmooth(cfg.grid, modes=4)
    dw = noise.sample_increment(cfg.driver(4), 0, 0)
    inc = noise.apply_noise(G, 0.0, np.zeros(cfg.grid.shape), dw)
    u1 = ev.step_regularized(np.zeros(cfg.grid.shape), 0.0, cfg, inc)
    assert np.allclose(u1, cfg.grid.laplacian_solve(inc, cfg.lam * cfg.dt), atol=1e-15)
    b = ev.simulate(np.zeros(cfg.grid.shape), cfg.replace(T=cfg.dt, modes=4), G)
    assert np.allclose(b.u_final[0], u1, atol=1e-15)


@pytest.mark.parametrize("name", ["quad", "pgrow:1.5", "pgrow:3", "abs_quad", "aniso_quad"])
def test_deterministic_energy_nonincreasing(name):
    cfg = BASE.replace(integrand=name)
    b = ev.simulate(sine(cfg.grid) + 0.3 * sine(cfg.grid, 2), cfg, noise.ZeroNoise(cfg.grid))
    assert np.all(np.diff(b.diagnostics["u_sq"][0]) <= 1e-15)


def test_fenchel_columns():
    cfg = BASE.replace(paths=4, integrand="aniso_quad")
    b = ev.simulate(sine(cfg.grid), cfg, noise.AdditiveSmooth(cfg.grid, modes=8))
    # per-site gaps are integrated, so compare against the site-summed tolerance
    assert np.min(b.diagnostics["gap"]) >= -1e-8
    assert np.max(np.abs(b.diagnostics["selection_gap"])) <= 1e-8


def test_batch_and_worker_invariance():
    cfg = BASE.replace(paths=5, T=0.005)
    G = noise.AdditiveSmooth(cfg.grid, modes=6)
    u0 = sine(cfg.grid)
    whole = ev.simulate(u0, cfg, G)
    threaded = ev.simulate(u0, cfg.replace(workers=3), G)
    alone = ev.simulate(u0, cfg, G, paths=[3])
    assert np.array_equal(whole.u_final, threaded.u_final)
    assert np.array_equal(whole.u_final[3], alone.u_final[0])
    for key in ev.DIAGNOSTIC_COLUMNS:
        assert np.array_equal(whole.diagnostics[key], threaded.diagnostics[key])


def test_two_dimensional_run():
    cfg = ev.SolverConfig(lam=0.1, dt=1e-4, T=0.005, cells=8, dim=2, paths=2,
                          integrand="aniso_quad", modes=4)
    b = ev.simulate(sine(cfg.grid), cfg, noise.AdditiveSmooth(cfg.grid, modes=4))
    assert b.u_final.shape == (2, 7, 7)
    assert np.all(np.isfinite(b.u_final))


def test_guard():
    cfg = BASE.replace(dt=1e-3)
    assert not cfg.guard_ok
    with pytest.raises(GuardViolation):
        ev.simulate(np.zeros(cfg.grid.shape), cfg, noise.ZeroNoise(cfg.grid))


def test_blow_up_reported():
    cfg = ev.SolverConfig(lam=1e-3, dt=1e-2, T=20, cells=16, integrand="quad",
                          guard_override=True)
    with pytest.raises(BlowUpError) as info:
        ev.simulate(sine(cfg.grid), cfg, noise.ZeroNoise(cfg.grid), diagnostics=False)
    assert info.value.step > 0
    assert info.value.path == 0


def test_energy_residual_at_zero_is_zero():
    cfg = BASE.replace(paths=3)
    b = ev.simulate(sine(cfg.grid), cfg, noise.AdditiveSmooth(cfg.grid, modes=4))
    assert ev.energy_residual(b, 0.0).value == 0.0
    with pytest.raises(ValueError):
        ev.energy_residual(b, 1.0)


def test_energy_residual_first_order_in_dt():
    cfg = ev.SolverConfig(lam=0.1, dt=8e-5, T=0.05, cells=16, integrand="quad")
    res = []
    for lev in range(3):
        c = cfg.replace(dt=cfg.dt / 2**lev)
        b = ev.simulate(sine(c.grid), c, noise.ZeroNoise(c.grid))
        res.append(ev.energy_residual(b, c.T).value)
    assert res[0] / res[1] == pytest.approx(2, rel=0.05)
    assert res[1] / res[2] == pytest.approx(2, rel=0.05)


def test_energy_identity_with_noise():
    cfg = BASE.replace(paths=400, seed=3, T=0.02)
    b = ev.simulate(sine(cfg.grid), cfg, one_mode(cfg.grid))
    est = ev.energy_residual(b, cfg.T)
    det = ev.energy_residual(ev.simulate(sine(cfg.grid), cfg.replace(paths=1),
                                         noise.ZeroNoise(cfg.grid)), cfg.T)
    assert abs(est.value) <= 3 * est.stderr + abs(det.value)


def test_weighted_energy_residual_small():
    cfg = BASE.replace(integrand="quad")
    b = ev.simulate(sine(cfg.grid), cfg, noise.ZeroNoise(cfg.grid))
    assert abs(ev.energy_residual(b, cfg.T, alpha=5.0).value) < 1e-3


def test_apriori_zero_case():
    cfg = BASE.replace(paths=2)
    b = ev.simulate(np.zeros(cfg.grid.shape), cfg, noise.ZeroNoise(cfg.grid))
    rep = ev.apriori_estimate(b)
    assert rep.ratios == (0.0, 0.0, 0.0)
    assert rep.total_ratio == 0.0


def test_apriori_doubling_quadratic():
    cfg = BASE.replace(integrand="quad")
    u0 = sine(cfg.grid)
    r1 = ev.apriori_estimate(ev.simulate(u0, cfg, noise.ZeroNoise(cfg.grid)))
    r2 = ev.apriori_estimate(ev.simulate(2 * u0, cfg, noise.ZeroNoise(cfg.grid)))
    assert r2.sup_l2 == pytest.approx(2 * r1.sup_l2, rel=1e-12)
    assert r2.viscous <= 2 * r1.viscous * (1 + 1e-12)
    assert r2.dissipation <= 4 * r1.dissipation * (1 + 1e-12)


def test_apriori_quadratic_ratios_lambda_uniform():
    ratios = []
    for lam in (1.0, 0.1, 0.01):
        cfg = ev.SolverConfig(lam=lam, dt=3.9e-5, T=0.05, cells=8, paths=20,
                              integrand="quad", seed=2)
        G = noise.AdditiveSmooth(cfg.grid, modes=8)
        ratios.append(ev.apriori_estimate(ev.simulate(sine(cfg.grid), cfg, G)).total_ratio)
    assert max(ratios) < 3.0


def test_bundle_select_and_csv():
    cfg = BASE.replace(paths=3, T=10 * BASE.dt)
    b = ev.simulate(sine(cfg.grid), cfg, noise.AdditiveSmooth(cfg.grid, modes=2))
    sub = b.select([2])
    assert np.array_equal(sub.u_final[0], b.u_final[2])
    text = b.path_csv(1)
    lines = text.splitlines()
    assert lines[0] == "# schema=trajectory/1"
    assert lines[1].split(",") == ["t", *ev.DIAGNOSTIC_COLUMNS]
    assert len(lines) == cfg.steps + 3
    assert text == b.path_csv(1)


def test_config_validation():
    with pytest.raises(ValueError):
        ev.SolverConfig(lam=0.0)
    with pytest.raises(ValueError):
        ev.SolverConfig(dt=-1.0)
    with pytest.raises(ValueError):
        ev.SolverConfig(dim=3)
