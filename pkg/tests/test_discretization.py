import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monotone_spde.discretization import Grid, field_from_csv, field_to_csv

GRIDS = [Grid.unit(c, 1) for c in (8, 16, 32, 64)] + [Grid.unit(c, 2) for c in (8, 16, 32)]


def test_gradient_example():
    g = Grid.unit(4, 1)
    assert g.h == 0.25
    assert np.allclose(g.gradient(np.array([0.0, 1.0, 0.0]))[:, 0], [0, 4, -4, 0])


@pytest.mark.parametrize("grid", GRIDS, ids=str)
def test_gradient_linear(grid):
    rng = np.random.default_rng(0)
    v = rng.normal(size=grid.shape)
    assert not np.any(grid.gradient(np.zeros(grid.shape)))
    assert np.allclose(grid.gradient(3.5 * v), 3.5 * grid.gradient(v), rtol=1e-14)


@pytest.mark.parametrize("grid", GRIDS, ids=str)
def test_summation_by_parts(grid):
    rng = np.random.default_rng(1)
    eta = rng.normal(size=(100,) + grid.vshape)
    phi = rng.normal(size=(100,) + grid.shape)
    lhs = grid.inner(grid.divergence(eta), phi)
    rhs = -grid.vinner(eta, grid.gradient(phi))
    scale = np.abs(lhs) + np.abs(rhs) + 1
    assert np.max(np.abs(lhs - rhs) / scale) <= 1e-14


def test_constant_vector_field_divergence():
    g = Grid.unit(8, 1)
    d = g.divergence(np.full(g.vshape, 2.0))
    assert np.all(d == 0)


@pytest.mark.parametrize("grid", GRIDS, ids=str)
def test_div_grad_is_standard_stencil(grid):
    rng = np.random.default_rng(2)
    u = rng.normal(size=grid.shape)
    up = np.pad(u, 1)
    h2 = grid.h**2
    if grid.dim == 1:
        ref = (up[2:] - 2 * up[1:-1] + up[:-2]) / h2
    else:
        ref = (up[2:, 1:-1] + up[:-2, 1:-1] + up[1:-1, 2:] + up[1:-1, :-2]
               - 4 * up[1:-1, 1:-1]) / h2
    assert np.allclose(grid.laplacian(u), ref, rtol=1e-12, atol=1e-9)


def test_solve_sine_eigenvector():
    g = Grid.unit(32, 1)
    j, sigma = 3, 0.01
    f = g.field(lambda x: np.sin(np.pi * j * x))
    mu = 4 / g.h**2 * np.sin(np.pi * j * g.h / 2) ** 2
    assert np.allclose(g.laplacian_solve(f, sigma), f / (1 + sigma * mu), atol=1e-13)


@pytest.mark.parametrize("grid", GRIDS, ids=str)
def test_solve_residual(grid):
    rng = np.random.default_rng(3)
    f = rng.normal(size=(4,) + grid.shape)
    assert np.array_equal(grid.laplacian_solve(f, 0.0), f)
    for sigma in (1e-4, 0.1, 10.0):
        w = grid.laplacian_solve(f, sigma)
        res = w - sigma * grid.laplacian(w) - f
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(f)


def test_solve_rejects_negative_sigma():
    with pytest.raises(ValueError):
        Grid.unit(8).laplacian_solve(np.zeros(7), -1.0)


def test_norms_example():
    g = Grid((5,), extent=1.0)
    assert g.h == pytest.approx(0.2)
    assert g.norms(np.ones(4))["l1"] == pytest.approx(0.8)
    assert all(v == 0 for v in g.norms(np.zeros(4)).values())


@settings(max_examples=50, deadline=None)
# squares of tiny alphas underflow, which says nothing about the norms
@given(alpha=st.floats(-1e3, 1e3).filter(lambda a: a == 0 or abs(a) > 1e-100), seed=st.integers(0, 2**32 - 1))
def test_norm_homogeneity(alpha, seed):
    g = Grid.unit(8, 2)
    u = np.random.default_rng(seed).normal(size=g.shape)
    a, b = g.norms(alpha * u), g.norms(u)
    for key in ("l1", "l2", "w11_semi"):
        assert a[key] == pytest.approx(abs(alpha) * b[key], rel=1e-12, abs=1e-300)


def test_bad_grids():
    with pytest.raises(ValueError):
        Grid.unit(1)
    with pytest.raises(ValueError):
        Grid((4, 8))
    with pytest.raises(ValueError):
        Grid.unit(4).gradient(np.zeros(5))


@pytest.mark.parametrize("grid", [Grid.unit(8, 1), Grid.unit(6, 2)], ids=str)
def test_csv_round_trip(grid):
    u = np.random.default_rng(4).normal(size=grid.shape)
    back_grid, back = field_from_csv(field_to_csv(grid, u))
    assert back_grid == grid
    assert np.array_equal(back, u)


def test_csv_golden():
    g = Grid.unit(4, 1)
    assert field_to_csv(g, np.array([0.0, 1.0, -0.5])) == (
        "# grid n=1 cells=4 h=0.25\n0.0,1.0,-0.5\n")
