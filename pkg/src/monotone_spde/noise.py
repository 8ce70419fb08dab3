"""Truncated cylindrical Wiener noise and Hilbert-Schmidt coefficients.

Increments are generated by a counter-based generator: the normal for
``(seed, path, fine step, mode)`` comes from a Philox block keyed by
``(seed, path)`` at counter ``fine_step * blocks + mode // 4``, lane
``mode % 4``.  Any increment can therefore be recomputed in isolation, paths
need no shared state, and a driver with ``substeps = 2`` sums exactly the
same fine normals as one with half the time step, which couples runs across
time-step refinements (common random numbers).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.random import Philox
from scipy import special

_TWO_M53 = 2.0**-53


class WienerDriver:
    """Increments of a ``K``-mode truncation of a cylindrical Wiener process.

    Args:
        seed: master seed (unsigned 64-bit).
        modes: truncation level ``K``.
        dt: time step of the increments this driver hands out.
        substeps: number of fine normals summed into one increment; the fine
            step is ``dt / substeps``.
    """

    def __init__(self, seed, modes, dt, substeps=1):
        if modes < 1:
            raise ValueError("modes must be positive")
        if not dt > 0:
            raise ValueError("dt must be positive")
        if substeps < 1:
            raise ValueError("substeps must be positive")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.modes = int(modes)
        self.dt = float(dt)
        self.substeps = int(substeps)
        self._blocks = -(-self.modes // 4)

    def __repr__(self):
        return (f"WienerDriver(seed={self.seed}, modes={self.modes}, "
                f"dt={self.dt!r}, substeps={self.substeps})")

    def _fine_normals(self, path, start, count):
        """Standard normals for fine steps ``start .. start+count-1``."""
        key = np.array([self.seed, int(path)], dtype=np.uint64)
        bg = Philox(key=key, counter=[start * self._blocks, 0, 0, 0])
        raw = bg.random_raw(count * self._blocks * 4)
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) * _TWO_M53
        z = special.ndtri(u).reshape(count, self._blocks * 4)
        return z[:, : self.modes]

    def increments(self, path, start, stop):
        """Increments for coarse steps ``start .. stop-1``; shape ``(stop-start, K)``."""
        s = self.substeps
        count = stop - start
        z = self._fine_normals(path, start * s, count * s)
        if s > 1:
            z = z.reshape(count, s, self.modes).sum(axis=1)
        return math.sqrt(self.dt / s) * z

    def batch(self, paths, start, stop):
        """Increments for several paths; shape ``(len(paths), stop-start, K)``."""
        return np.stack([self.increments(p, start, stop) for p in paths])


def sample_increment(driver, path, step):
    """``K`` independent ``N(0, dt)`` draws for one ``(path, step)``."""
    return driver.increments(path, step, step + 1)[0]


class DiffusionCoefficient:
    """``B(t, u)`` given through its action on the first ``K`` basis vectors.

    :meth:`modes` returns the fields ``B(t, u) e_k`` stacked on an axis just
    before the grid axes: shape ``(..., K) + grid.shape``.
    """

    kind = "additive"
    name = "coefficient"
    lipschitz_constant = 0.0
    growth_constant = 0.0

    def __init__(self, grid, modes):
        self.grid = grid
        self.K = int(modes)

    def modes(self, t, u):
        raise NotImplementedError

    def hs_tail(self):
        """Upper bound on the squared HS mass discarded by truncating at ``K``."""
        return 0.0

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, K={self.K})"


def _mode_shapes(grid, K):
    coords = grid.coordinates()
    k = np.arange(1, K + 1, dtype=float)
    if grid.dim == 1:
        return np.sin(np.pi * k[:, None] * coords[0][None, :])
    x, y = coords
    return np.sin(np.pi * k[:, None, None] * x) * np.sin(np.pi * k[:, None, None] * y)


def _zeta_tail(K, exponent):
    return float(special.zeta(exponent, K + 1))


class AdditiveSmooth(DiffusionCoefficient):
    """``G e_k = amplitude * k^{-decay} * sin(k pi x)`` (product of sines in 2D)."""

    kind = "additive"
    name = "add_smooth"

    def __init__(self, grid, modes=16, decay=2.0, amplitude=1.0):
        super().__init__(grid, modes)
        self.decay = float(decay)
        self.amplitude = float(amplitude)
        k = np.arange(1, self.K + 1, dtype=float)
        self.weights = amplitude * k ** (-self.decay)
        w = self.weights.reshape((-1,) + (1,) * grid.dim)
        self._fields = w * _mode_shapes(grid, self.K)
        self.growth_constant = float(np.sqrt(np.sum(self.weights**2)))

    def modes(self, t, u=None):
        return self._fields

    def hs_tail(self):
        return self.amplitude**2 * _zeta_tail(self.K, 2.0 * self.decay)


class AdditiveModes(DiffusionCoefficient):
    """Additive coefficient with explicitly supplied mode fields."""

    kind = "additive"
    name = "add_modes"

    def __init__(self, grid, fields):
        fields = np.asarray(fields, dtype=float)
        super().__init__(grid, fields.shape[0])
        self._fields = fields
        self.growth_constant = float(np.sqrt(np.sum(grid.inner(fields, fields))))

    def modes(self, t, u=None):
        return self._fields


class ZeroNoise(AdditiveModes):
    name = "zero"

    def __init__(self, grid, modes=1):
        super().__init__(grid, np.zeros((modes,) + grid.shape))


class MultNemytskii(DiffusionCoefficient):
    """``B(u) e_k = amplitude * k^{-decay} sin(k pi x) (c0 + c1 clip(u, -clamp, clamp))``.

    Clipping makes ``B`` globally Lipschitz with
    ``L_B = amplitude * c1 * sqrt(sum_k k^{-2 decay})`` and bounded, hence of
    linear growth.
    """

    kind = "multiplicative"
    name = "mult_nemytskii"

    def __init__(self, grid, modes=16, decay=2.0, c0=0.0, c1=1.0, clamp=10.0,
                 amplitude=1.0):
        super().__init__(grid, modes)
        if c1 < 0 or clamp <= 0:
            raise ValueError("need c1 >= 0 and clamp > 0")
        self.decay = float(decay)
        self.c0, self.c1, self.clamp = float(c0), float(c1), float(clamp)
        self.amplitude = float(amplitude)
        k = np.arange(1, self.K + 1, dtype=float)
        self.weights = amplitude * k ** (-self.decay)
        w = self.weights.reshape((-1,) + (1,) * grid.dim)
        self._shapes = w * _mode_shapes(grid, self.K)
        a = float(np.sqrt(np.sum(self.weights**2)))
        self.lipschitz_constant = self.c1 * a
        self.growth_constant = a * max(abs(self.c0), self.c1)

    def multiplier(self, u):
        return self.c0 + self.c1 * np.clip(u, -self.clamp, self.clamp)

    def modes(self, t, u):
        u = np.asarray(u, dtype=float)
        m = self.multiplier(u)
        lead = u.ndim - self.grid.dim
        return np.expand_dims(m, lead) * self._shapes

    def hs_tail(self):
        bound = (abs(self.c0) + self.c1 * self.clamp) ** 2
        return self.amplitude**2 * bound * _zeta_tail(self.K, 2.0 * self.decay)


def get_coefficient(name, grid, modes=16, **params):
    """Registry: ``add_smooth``, ``mult_nemytskii``, ``zero``."""
    if name == "add_smooth":
        keys = {"decay", "amplitude"}
        return AdditiveSmooth(grid, modes, **{k: v for k, v in params.items() if k in keys})
    if name == "mult_nemytskii":
        keys = {"decay", "c0", "c1", "clamp", "amplitude"}
        return MultNemytskii(grid, modes, **{k: v for k, v in params.items() if k in keys})
    if name == "zero":
        return ZeroNoise(grid, modes)
    raise KeyError(f"unknown coefficient {name!r}")


def combine_modes(fields, dw, dim):
    """``sum_k fields[..., k, :] * dw[..., k]`` with a fixed summation order.

    Looping over modes keeps every output entry a fixed sequence of scalar
    operations, so results do not depend on how paths are batched.
    """
    K = dw.shape[-1]
    fields = np.asarray(fields)
    kaxis = fields.ndim - dim - 1
    shape_tail = (1,) * dim
    acc = None
    for k in range(K):
        term = np.take(fields, k, axis=kaxis) * dw[..., k].reshape(dw.shape[:-1] + shape_tail)
        acc = term if acc is None else acc + term
    return acc


def apply_noise(coef, t, u, dw):
    """One-step stochastic integral increment ``sum_k (B(t,u) e_k) dw_k``."""
    u = np.asarray(u, dtype=float)
    dw = np.asarray(dw, dtype=float)
    out = combine_modes(coef.modes(t, u), dw, coef.grid.dim)
    return np.broadcast_to(out, np.broadcast_shapes(out.shape, u.shape)).copy()


def hs_norm_sq(coef, t, u):
    fields = coef.modes(t, u)
    g = coef.grid
    axes = tuple(range(-g.dim, 0))
    per_mode = g.node_weight * np.sum(fields * fields, axis=axes)
    total = np.sum(per_mode, axis=-1)
    u = np.asarray(u, dtype=float)
    lead = u.shape[: u.ndim - g.dim]
    return np.broadcast_to(total, lead).copy() if lead else float(total)


def hs_norm(coef, t, u):
    """``sqrt(sum_k ||B(t,u) e_k||_{L^2}^2)``."""
    return np.sqrt(hs_norm_sq(coef, t, u))
