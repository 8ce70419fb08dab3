"""Finite differences on the unit interval / unit square with Dirichlet data.

Scalar fields live on interior nodes (boundary values are implicit zeros).
Gradients live on a lattice of *sites*:

* 1D: the ``c`` cell faces, ``grad u = (u[i+1] - u[i]) / h`` with ghost zeros;
* 2D: two right triangles per cell.  On the lower triangle of cell ``(i, j)``
  the gradient is the pair of forward differences anchored at node
  ``(i, j)``; on the upper triangle the pair anchored at ``(i+1, j+1)``
  looking backwards.  Both components sit on the same site, which the
  nonlinear pointwise map ``gamma_lam`` needs.

The divergence is *defined* as the negative adjoint of the gradient for the
weighted inner products (node weight ``h^n``, site weight ``h`` in 1D and
``h^2/2`` in 2D), so summation by parts holds to rounding.  With these
weights ``div o grad`` is the standard 3-point / 5-point Laplacian.

All operators act on the trailing grid axes and broadcast over leading
batch axes (paths, time levels).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, extent]^n``, ``n`` in ``{1, 2}``."""

    cells: tuple
    extent: float = 1.0

    def __post_init__(self):
        cells = (self.cells,) if np.isscalar(self.cells) else tuple(self.cells)
        cells = tuple(int(c) for c in cells)
        if len(cells) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if any(c < 2 for c in cells):
            raise ValueError("need at least 2 cells per axis")
        if len(set(cells)) != 1:
            raise ValueError("cells per axis must agree (uniform spacing)")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def unit(cls, cells, dim=1):
        return cls((cells,) * dim)

    @property
    def dim(self):
        return len(self.cells)

    @property
    def h(self):
        return self.extent / self.cells[0]

    @property
    def shape(self):
        """Shape of a scalar field (interior nodes)."""
        return tuple(c - 1 for c in self.cells)

    @property
    def site_count(self):
        c = self.cells
        return c[0] if self.dim == 1 else 2 * c[0] * c[1]

    @property
    def vshape(self):
        """Shape of a vector field: ``(sites, n)``."""
        return (self.site_count, self.dim)

    @property
    def node_weight(self):
        return self.h**self.dim

    @property
    def site_weight(self):
        return self.h if self.dim == 1 else 0.5 * self.h * self.h

    def coordinates(self):
        """Interior node coordinates, one array per axis (``ij`` indexing)."""
        ax = self.h * np.arange(1, self.cells[0])
        if self.dim == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def field(self, func):
        """Sample ``func(*coords)`` on interior nodes."""
        return np.asarray(func(*self.coordinates()), dtype=float)

    # -- checks ------------------------------------------------------------

    def _check_field(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[u.ndim - self.dim:] != self.shape:
            raise ValueError(f"field shape {u.shape} does not end with {self.shape}")
        return u

    def _check_vector(self, eta):
        eta = np.asarray(eta, dtype=float)
        if eta.shape[eta.ndim - 2:] != self.vshape:
            raise ValueError(f"vector field shape {eta.shape} does not end with {self.vshape}")
        return eta

    def _pad(self, u):
        pad = [(0, 0)] * (u.ndim - self.dim) + [(1, 1)] * self.dim
        return np.pad(u, pad)

    # -- operators ---------------------------------------------------------

    def gradient(self, u):
        u = self._check_field(u)
        h = self.h
        if self.dim == 1:
            g = np.empty(u.shape[:-1] + (self.cells[0], 1))
            g[..., 0, 0] = u[..., 0]
            g[..., 1:-1, 0] = u[..., 1:] - u[..., :-1]
            g[..., -1, 0] = -u[..., -1]
            g /= h
            return g
        up = self._pad(u)
        lower_x = (up[..., 1:, :-1] - up[..., :-1, :-1]) / h
        lower_y = (up[..., :-1, 1:] - up[..., :-1, :-1]) / h
        upper_x = (up[..., 1:, 1:] - up[..., :-1, 1:]) / h
        upper_y = (up[..., 1:, 1:] - up[..., 1:, :-1]) / h
        lead = u.shape[:-2]
        lower = np.stack([lower_x, lower_y], axis=-1).reshape(lead + (-1, 2))
        upper = np.stack([upper_x, upper_y], axis=-1).reshape(lead + (-1, 2))
        return np.concatenate([lower, upper], axis=-2)

    def divergence(self, eta):
        """Negative adjoint of :meth:`gradient`."""
        eta = self._check_vector(eta)
        h = self.h
        if self.dim == 1:
            g = eta[..., 0]
            # -(1/h) * D^T (h g) with D the padded forward difference
            return (g[..., 1:] - g[..., :-1]) / h
        c0, c1 = self.cells
        lead = eta.shape[:-2]
        half = c0 * c1
        lower = eta[..., :half, :].reshape(lead + (c0, c1, 2))
        upper = eta[..., half:, :].reshape(lead + (c0, c1, 2))
        acc = np.zeros(lead + (c0 + 1, c1 + 1))
        # adjoint of each difference stencil; site weight / node weight = 1/2
        lx, ly = lower[..., 0], lower[..., 1]
        ux, uy = upper[..., 0], upper[..., 1]
        acc[..., 1:, :-1] += lx
        acc[..., :-1, :-1] -= lx
        acc[..., :-1, 1:] += ly
        acc[..., :-1, :-1] -= ly
        acc[..., 1:, 1:] += ux
        acc[..., :-1, 1:] -= ux
        acc[..., 1:, 1:] += uy
        acc[..., 1:, :-1] -= uy
        return -0.5 * acc[..., 1:-1, 1:-1] / h

    def laplacian(self, u):
        return self.divergence(self.gradient(u))

    def laplacian_eigenvalues(self):
        """Eigenvalues ``mu >= 0`` of ``-div o grad`` on the sine basis."""
        return _eigenvalues(self.cells[0], self.dim, self.extent)

    def _solve_denominator(self, sigma):
        return _denominator(self.cells[0], self.dim, self.extent, float(sigma))

    def _eigs_uncached(self):
        c = self.cells[0]
        j = np.arange(1, c)
        mu1 = 4.0 / self.h**2 * np.sin(np.pi * j / (2.0 * c)) ** 2
        if self.dim == 1:
            return mu1
        return mu1[:, None] + mu1[None, :]

    def laplacian_solve(self, f, sigma):
        """Solve ``(I - sigma * div o grad) w = f``.

        The Dirichlet stencil is diagonalized exactly by the type-I sine
        transform, so the solve is a pair of DSTs and a diagonal scaling.
        """
        if not sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        f = self._check_field(f)
        if sigma == 0:
            return f.copy()
        den = self._solve_denominator(sigma)
        if self.dim == 1:
            fh = fft.dst(f, type=1, axis=-1)
            fh /= den
            return fft.idst(fh, type=1, axis=-1)
        axes = (-2, -1)
        fh = fft.dstn(f, type=1, axes=axes)
        fh /= den
        return fft.idstn(fh, type=1, axes=axes)

    # -- inner products and norms ------------------------------------------

    def inner(self, u, v):
        axes = tuple(range(-self.dim, 0))
        return self.node_weight * np.sum(np.asarray(u) * np.asarray(v), axis=axes)

    def vinner(self, eta, xi):
        return self.site_weight * np.sum(np.asarray(eta) * np.asarray(xi), axis=(-2, -1))

    def site_integral(self, values):
        """Quadrature of a per-site scalar (shape ``(..., sites)``)."""
        return self.site_weight * np.sum(values, axis=-1)

    def norms(self, u):
        """L^1, L^2 and W^{1,1}-seminorm of a field, with weight ``h^n``."""
        u = self._check_field(u)
        axes = tuple(range(-self.dim, 0))
        grad = self.gradient(u)
        return {
            "l1": self.node_weight * np.sum(np.abs(u), axis=axes),
            "l2": np.sqrt(self.node_weight * np.sum(u * u, axis=axes)),
            "w11_semi": self.site_integral(np.sqrt(np.sum(grad * grad, axis=-1))),
        }

    def vnorms(self, eta):
        """L^1 (Euclidean pointwise) and L^2 norms of a vector field."""
        eta = self._check_vector(eta)
        mag = np.sqrt(np.sum(eta * eta, axis=-1))
        return {
            "l1": self.site_integral(mag),
            "l2": np.sqrt(self.site_integral(mag * mag)),
        }

    # -- serialization -----------------------------------------------------

    def header(self):
        cells = "x".join(str(c) for c in self.cells)
        return f"# grid n={self.dim} cells={cells} h={self.h!r}"


@lru_cache(maxsize=None)
def _eigenvalues(cells, dim, extent):
    eig = Grid((cells,) * dim, extent)._eigs_uncached()
    eig.setflags(write=False)
    return eig


@lru_cache(maxsize=64)
def _denominator(cells, dim, extent, sigma):
    den = 1.0 + sigma * _eigenvalues(cells, dim, extent)
    den.setflags(write=False)
    return den


def field_to_csv(grid, u):
    """Flat row-major CSV of a field, headed by the grid description."""
    u = grid._check_field(u)
    if u.shape != grid.shape:
        raise ValueError("serialize one field at a time")
    buf = io.StringIO()
    buf.write(grid.header() + "\n")
    for row in np.atleast_2d(u) if grid.dim == 2 else u[None, :]:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def field_from_csv(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    head = lines[0]
    if not head.startswith("# grid"):
        raise ValueError("missing grid header")
    meta = dict(tok.split("=", 1) for tok in head[len("# grid"):].split())
    cells = tuple(int(c) for c in meta["cells"].split("x"))
    extent = float(meta["h"]) * cells[0]
    grid = Grid(cells, extent=extent)
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    u = np.array(rows)
    return grid, (u[0] if grid.dim == 1 else u)
