"""Convex integrands and the maps derived from them.

An integrand ``k: R^n -> R_+`` with ``k(0) = 0`` generates the maximal
monotone graph ``gamma = dk``.  The graph itself is never evaluated; all
access goes through

* the resolvent ``(I + lam*gamma)^{-1}``, i.e. the proximal point of ``lam*k``,
* the Yosida approximation ``gamma_lam(x) = (x - prox(lam, x)) / lam``,
* the convex conjugate ``k*`` and the Fenchel gap, which certifies graph
  membership: ``k(y) + k*(r) - r.y == 0`` iff ``r`` lies in ``gamma(y)``.

Points are arrays whose last axis has length ``n``; every function is
vectorized over the leading axes.  For ``n == 1`` plain scalars are accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConjugateOverflowError, ProxSolverError

PROX_TOL = 1e-12
PROX_MAX_ITER = 100
IDENTITY_TOL = 1e-8
CONVEXITY_TOL = 1e-10

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"expected trailing axis of length {n}, got shape {x.shape}")
    return x


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


class ConvexIntegrand:
    """Base class for integrands ``k``.

    Subclasses implement :meth:`__call__` and usually a closed-form
    :meth:`prox`.  ``conjugate`` is optional; when it is ``None`` the
    brute-force Legendre transform is used instead.
    """

    name = "integrand"
    radial = False

    def __init__(self, dimension=1, asymmetry_bound=1.0):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        if asymmetry_bound < 1.0:
            raise ValueError("asymmetry_bound must be >= 1")
        self.dimension = int(dimension)
        self.asymmetry_bound = float(asymmetry_bound)

    def __call__(self, x):
        raise NotImplementedError

    def prox(self, lam, x):
        raise NotImplementedError

    conjugate = None

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dimension={self.dimension})"


class QuadraticIntegrand(ConvexIntegrand):
    """``k(x) = |x|^2 / 2``; ``gamma`` is the identity."""

    name = "quad"
    radial = True

    def __call__(self, x):
        x = _points(x, self.dimension)
        return 0.5 * np.sum(x * x, axis=-1)

    def prox(self, lam, x):
        return _points(x, self.dimension) / (1.0 + lam)

    def conjugate(self, r):
        r = _points(r, self.dimension)
        return 0.5 * np.sum(r * r, axis=-1)


class AbsQuadIntegrand(ConvexIntegrand):
    """``k(x) = |x| + |x|^2 / 2``.

    ``gamma(0)`` is the closed unit ball, so the graph is genuinely
    multivalued at the origin.
    """

    name = "abs_quad"
    radial = True

    def __call__(self, x):
        x = _points(x, self.dimension)
        s = _norm(x)
        return s + 0.5 * s * s

    def prox(self, lam, x):
        x = _points(x, self.dimension)
        s = _norm(x)
        rho = np.maximum(s - lam, 0.0) / (1.0 + lam)
        scale = np.divide(rho, s, out=np.zeros_like(s), where=s > 0)
        return x * scale[..., None]

    def conjugate(self, r):
        r = _points(r, self.dimension)
        t = np.maximum(_norm(r) - 1.0, 0.0)
        return 0.5 * t * t


class AnisoQuadIntegrand(ConvexIntegrand):
    """``k(x) = |x|^2 / 2 + max(x_1, 0)``.

    Asymmetric: ``k(-x) <= 2 (1 + k(x))``.  Separable, so the prox and the
    conjugate act coordinatewise.
    """

    name = "aniso_quad"

    def __init__(self, dimension=1):
        super().__init__(dimension, asymmetry_bound=2.0)

    def __call__(self, x):
        x = _points(x, self.dimension)
        return 0.5 * np.sum(x * x, axis=-1) + np.maximum(x[..., 0], 0.0)

    def prox(self, lam, x):
        x = _points(x, self.dimension)
        out = x / (1.0 + lam)
        x1 = x[..., 0]
        out[..., 0] = np.where(
            x1 <= 0.0, x1 / (1.0 + lam), np.maximum(x1 - lam, 0.0) / (1.0 + lam)
        )
        return out

    def conjugate(self, r):
        r = _points(r, self.dimension)
        r1 = r[..., 0]
        first = np.where(r1 < 0.0, 0.5 * r1 * r1, 0.5 * np.maximum(r1 - 1.0, 0.0) ** 2)
        return first + 0.5 * np.sum(r[..., 1:] ** 2, axis=-1)


class RadialIntegrand(ConvexIntegrand):
    """``k(x) = phi(|x|)`` for a convex nondecreasing profile ``phi``.

    The prox reduces to the scalar equation ``rho + lam*phi'(rho) = |x|``,
    solved by Newton's method safeguarded with bisection on ``[0, |x|]``.
    If ``|x| <= lam*phi'(0+)`` the prox is the origin.

    Args:
        profile: ``phi``, vectorized, with ``phi(0) = 0``.
        dprofile: right derivative ``phi'``.
        ddprofile: ``phi''`` (may be infinite at 0).
        conjugate_profile: optional ``phi*`` so that ``k*(r) = phi*(|r|)``.
    """

    radial = True

    def __init__(self, profile, dprofile, ddprofile, dimension=1,
                 conjugate_profile=None, name="radial"):
        super().__init__(dimension, asymmetry_bound=1.0)
        self.profile = profile
        self.dprofile = dprofile
        self.ddprofile = ddprofile
        self.name = name
        if conjugate_profile is not None:
            self._conj_profile = conjugate_profile
            self.conjugate = self._radial_conjugate

    def __call__(self, x):
        return self.profile(_norm(_points(x, self.dimension)))

    def _radial_conjugate(self, r):
        return self._conj_profile(_norm(_points(r, self.dimension)))

    def prox(self, lam, x):
        x = _points(x, self.dimension)
        s = _norm(x)
        rho = radial_prox_radius(self.dprofile, self.ddprofile, lam, s)
        scale = np.divide(rho, s, out=np.zeros_like(s), where=s > 0)
        return x * scale[..., None]


def radial_prox_radius(dphi, ddphi, lam, s, tol=PROX_TOL, max_iter=PROX_MAX_ITER):
    """Solve ``rho + lam*dphi(rho) = s`` for ``rho`` in ``[0, s]``, elementwise."""
    s = np.asarray(s, dtype=float)
    flat = s.reshape(-1)
    rho = np.zeros_like(flat)
    slope0 = float(dphi(np.zeros(1))[0])
    active = flat > lam * slope0
    if not np.any(active):
        return rho.reshape(s.shape)

    idx = np.nonzero(active)[0]
    target = flat[idx]
    lo = np.zeros_like(target)
    hi = target.copy()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        guess = np.minimum(target, (target / lam) ** 0.5)
    cur = np.clip(np.nan_to_num(guess, nan=0.5 * target[0]), lo, hi)
    cur = np.where((cur <= 0) | (cur >= hi), 0.5 * hi, cur)
    scale = np.maximum(1.0, target)

    res = None
    for _ in range(max_iter):
        res = cur + lam * dphi(cur) - target
        lo = np.where(res < 0, cur, lo)
        hi = np.where(res > 0, cur, hi)
        done = (np.abs(res) <= tol * scale) | (hi - lo <= tol * scale)
        if np.all(done):
            break
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            newton = cur - res / (1.0 + lam * ddphi(cur))
        bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
        nxt = np.where(bad, 0.5 * (lo + hi), newton)
        # freeze converged entries so results do not depend on neighbours
        cur = np.where(done, cur, nxt)
    else:
        worst = int(np.argmax(np.abs(res) / scale))
        raise ProxSolverError(
            f"radial prox did not converge in {max_iter} iterations",
            last_iterate=float(cur[worst]),
            residual=float(res[worst]),
        )
    rho[idx] = cur
    return rho.reshape(s.shape)


class PowerIntegrand(RadialIntegrand):
    """p-growth integrand ``k(x) = |x|^p / p`` for ``p > 1``."""

    def __init__(self, p, dimension=1):
        if not p > 1.0:
            raise ValueError("p-growth integrand requires p > 1")
        q = p / (p - 1.0)
        self.p = float(p)
        super().__init__(
            profile=lambda t: t**p / p,
            dprofile=lambda t: t ** (p - 1.0),
            ddprofile=lambda t: (p - 1.0) * t ** (p - 2.0),
            dimension=dimension,
            conjugate_profile=lambda t: t**q / q,
            name=f"pgrow:{p:g}",
        )


class SmoothIntegrand(ConvexIntegrand):
    """Integrand known only through its value and gradient.

    The prox is computed by gradient descent with backtracking on the
    ``1/lam``-strongly convex objective ``k(y) + |y - x|^2 / (2 lam)``.
    """

    def __init__(self, func, grad, dimension=1, asymmetry_bound=1.0,
                 conjugate=None, name="smooth", max_iter=10_000):
        super().__init__(dimension, asymmetry_bound)
        self._func = func
        self._grad = grad
        self.name = name
        self.max_iter = max_iter
        if conjugate is not None:
            self.conjugate = lambda r: conjugate(_points(r, self.dimension))

    def __call__(self, x):
        return self._func(_points(x, self.dimension))

    def prox(self, lam, x):
        x = _points(x, self.dimension)
        shape = x.shape
        x = x.reshape(-1, self.dimension)
        y = x.copy()
        step = np.full(len(x), lam)

        def objective(z):
            return self._func(z) + np.sum((z - x) ** 2, axis=-1) / (2.0 * lam)

        f = objective(y)
        for _ in range(self.max_iter):
            g = self._grad(y) + (y - x) / lam
            gnorm = _norm(g)
            if np.all(lam * gnorm <= PROX_TOL * np.maximum(1.0, _norm(x))):
                return y.reshape(shape)
            while True:
                trial = y - step[:, None] * g
                ft = objective(trial)
                ok = ft <= f - 0.5 * step * gnorm**2 + 1e-15 * np.abs(f)
                if np.all(ok):
                    break
                step = np.where(ok, step, 0.5 * step)
            y, f = trial, ft
            step = np.minimum(step * 1.5, lam)
        worst = int(np.argmax(gnorm))
        raise ProxSolverError(
            "gradient prox did not converge",
            last_iterate=y[worst].copy(),
            residual=float(gnorm[worst]),
        )


# -- registry ---------------------------------------------------------------

def get_integrand(name, dimension=1):
    """Look up a built-in integrand by its registry name.

    Names: ``quad``, ``pgrow:<p>``, ``abs_quad``, ``aniso_quad``.
    """
    name = name.strip()
    if name == "quad":
        return QuadraticIntegrand(dimension)
    if name == "abs_quad":
        return AbsQuadIntegrand(dimension)
    if name == "aniso_quad":
        return AnisoQuadIntegrand(dimension)
    if name.startswith("pgrow:"):
        try:
            p = float(name.split(":", 1)[1])
        except ValueError as exc:
            raise ValueError(f"bad exponent in {name!r}") from exc
        return PowerIntegrand(p, dimension)
    raise KeyError(f"unknown integrand {name!r}")


BUILTIN_NAMES = ("quad", "pgrow:1.5", "pgrow:3", "abs_quad", "aniso_quad")


# -- core operations --------------------------------------------------------

def prox_solve(k, lam, x):
    """Resolvent point ``(I + lam*gamma)^{-1} x = argmin_y k(y) + |y-x|^2/(2 lam)``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    return k.prox(lam, _points(x, k.dimension))


def yosida_apply(k, lam, x):
    """Yosida approximation ``gamma_lam(x)``; a selection of ``gamma(prox(lam, x))``."""
    x = _points(x, k.dimension)
    return (x - prox_solve(k, lam, x)) / lam


def conjugate_eval(k, r):
    r = _points(r, k.dimension)
    if k.conjugate is not None:
        return k.conjugate(r)
    return legendre_conjugate(k, r)


def fenchel_gap(k, y, r):
    """``k(y) + k*(r) - r.y``; nonnegative, zero exactly on the graph of ``dk``."""
    y = _points(y, k.dimension)
    r = _points(r, k.dimension)
    return k(y) + conjugate_eval(k, r) - np.sum(r * y, axis=-1)


def yosida_duality_check(k, lam, x):
    """Signed residual of ``k(p) + k*(g) = g.x - lam |g|^2`` with
    ``p = prox(lam, x)`` and ``g = gamma_lam(x)``."""
    x = _points(x, k.dimension)
    p = prox_solve(k, lam, x)
    g = (x - p) / lam
    return (k(p) + conjugate_eval(k, g) - np.sum(g * x, axis=-1)
            + lam * np.sum(g * g, axis=-1))


@dataclass(frozen=True)
class GraphPoint:
    """A candidate pair ``(y, r)`` with ``r`` in ``gamma(y)``."""

    y: np.ndarray
    r: np.ndarray

    def gap(self, k):
        return float(fenchel_gap(k, self.y, self.r))

    def is_member(self, k, tol=IDENTITY_TOL):
        return abs(self.gap(k)) <= tol

    @classmethod
    def from_yosida(cls, k, lam, x):
        x = _points(x, k.dimension)
        p = prox_solve(k, lam, x)
        return cls(p, (x - p) / lam)


# -- brute-force Legendre transform -----------------------------------------

_SPHERE_SAMPLES = 256
_MAX_RADIUS = 1e8


def _boundary_sup(k, r, radius):
    n = k.dimension
    if n == 1:
        pts = np.array([[-radius], [radius]])
    else:
        theta = np.linspace(0.0, 2.0 * np.pi, _SPHERE_SAMPLES, endpoint=False)
        if n != 2:
            raise NotImplementedError("brute-force conjugate supports n <= 2")
        pts = radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return float(np.max(pts @ r - k(pts)))


def _legendre_radius(k, r):
    radius = max(10.0, 10.0 * float(np.linalg.norm(r)))
    prev = _boundary_sup(k, r, radius)
    drops = 0
    while drops < 2:
        radius *= 2.0
        if radius > _MAX_RADIUS:
            raise ConjugateOverflowError(
                f"Legendre box exceeded radius {_MAX_RADIUS:g} for r={r}; "
                "integrand is not numerically superlinear"
            )
        cur = _boundary_sup(k, r, radius)
        drops = drops + 1 if cur < prev else 0
        prev = cur
    return radius


def _golden_max(f, a, b, tol=1e-13, max_iter=200):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def legendre_conjugate(k, r, grid_points=4096):
    """Brute-force ``k*(r) = sup_x (x.r - k(x))``.

    The search box starts at radius ``max(10, 10|r|)`` and doubles until the
    supremum over its boundary has dropped twice in a row; superlinearity of
    ``k`` guarantees that happens.  The box is then scanned on a grid
    (``grid_points`` per axis in 1D, a coarser grid in 2D) and the best cell
    is refined locally.
    """
    r = _points(r, k.dimension)
    out = np.empty(r.shape[:-1])
    for idx in np.ndindex(out.shape):
        out[idx] = _legendre_single(k, r[idx], grid_points)
    return out if out.ndim else float(out)


def _legendre_single(k, r, grid_points):
    n = k.dimension
    radius = _legendre_radius(k, r)
    if n == 1:
        xs = np.linspace(-radius, radius, grid_points + 1)
        vals = xs * r[0] - k(xs[:, None])
        i = int(np.argmax(vals))
        dx = xs[1] - xs[0]
        f = lambda t: t * r[0] - float(k(np.array([t])))
        _, best = _golden_max(f, xs[i] - dx, xs[i] + dx)
        return max(best, float(vals[i]), 0.0)
    m = 129
    ax = np.linspace(-radius, radius, m)
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    vals = pts @ r - k(pts)
    i = int(np.argmax(vals))
    dx = ax[1] - ax[0]
    # zoom in twice on the best cell before the local polish
    start = pts[i]
    for _ in range(3):
        ax1 = np.linspace(-dx, dx, 65)
        gx, gy = np.meshgrid(start[0] + ax1, start[1] + ax1, indexing="ij")
        sub = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        sv = sub @ r - k(sub)
        j = int(np.argmax(sv))
        start = sub[j]
        dx = ax1[1] - ax1[0]
    res = optimize.minimize(
        lambda z: -(z @ r - float(k(z[None, :])[0])),
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
    )
    best = max(-res.fun, float(start @ r - k(start[None, :])[0]))
    return max(best, 0.0)


# -- property battery -------------------------------------------------------

def sample_points(rng, count, dimension, lam=None):
    """Random test points spanning several scales, plus exact zeros.

    When ``lam`` is given a share of the points is placed inside the radius
    ``lam`` ball, where multivalued integrands have their flat Yosida region.
    """
    direction = rng.standard_normal((count, dimension))
    direction /= np.maximum(_norm(direction), 1e-300)[:, None]
    radius = 10.0 ** rng.uniform(-3.0, 1.0, count)
    if lam is not None:
        inner = rng.random(count) < 0.2
        radius = np.where(inner, lam * rng.random(count), radius)
    pts = direction * radius[:, None]
    pts[: max(1, count // 100)] = 0.0
    return pts


def identity_residuals(k, lams=(1.0, 0.1, 0.01), count=10_000, seed=0):
    """Worst-case residuals of the convex-analysis identities for ``k``.

    Returns a dict with the minimum Fenchel gap (should be >= 0), the maximum
    absolute Yosida duality residual, the worst ``lam``-scaled Lipschitz ratio
    of ``gamma_lam`` (<= 1), the worst resolvent expansion ratio (<= 1), the
    reconstruction error of ``x = prox + lam*gamma_lam``, and the worst
    convexity violation of ``k`` along random chords.
    """
    rng = np.random.default_rng(seed)
    n = k.dimension
    out = {
        "fenchel_gap_min": np.inf,
        "duality_residual_max": 0.0,
        "yosida_lipschitz_max": 0.0,
        "resolvent_ratio_max": 0.0,
        "reconstruction_max": 0.0,
        "yosida_monotonicity_min": np.inf,
        "convexity_violation_max": 0.0,
        "k_at_zero": float(np.abs(k(np.zeros(n)))),
    }
    for lam in lams:
        x = sample_points(rng, count, n, lam)
        y = sample_points(rng, count, n, lam)
        px, py = prox_solve(k, lam, x), prox_solve(k, lam, y)
        gx, gy = (x - px) / lam, (y - py) / lam
        dxy = _norm(x - y)
        ok = dxy > 0

        gap = fenchel_gap(k, px, gx)
        gap_off = fenchel_gap(k, y, gx)
        out["fenchel_gap_min"] = min(out["fenchel_gap_min"], float(gap.min()),
                                     float(gap_off.min()))
        dual = yosida_duality_check(k, lam, x)
        out["duality_residual_max"] = max(out["duality_residual_max"],
                                          float(np.abs(dual).max()))
        out["yosida_lipschitz_max"] = max(
            out["yosida_lipschitz_max"],
            float(np.max(lam * _norm(gx - gy)[ok] / dxy[ok])))
        out["resolvent_ratio_max"] = max(
            out["resolvent_ratio_max"], float(np.max(_norm(px - py)[ok] / dxy[ok])))
        out["reconstruction_max"] = max(
            out["reconstruction_max"], float(np.max(np.abs(px + lam * gx - x))))
        mono = np.sum((gx - gy) * (x - y), axis=-1)
        out["yosida_monotonicity_min"] = min(out["yosida_monotonicity_min"],
                                             float(mono.min()))

    t = rng.random(count)
    a = sample_points(rng, count, n)
    b = sample_points(rng, count, n)
    mid = k(t[:, None] * a + (1 - t[:, None]) * b)
    chord = t * k(a) + (1 - t) * k(b)
    viol = (mid - chord) / np.maximum(1.0, np.abs(chord))
    out["convexity_violation_max"] = float(max(viol.max(), 0.0))
    return out


def superlinearity_profile(k, direction, radii):
    """Secant slopes ``k(R d) / (R |d|)``; nondecreasing in ``R`` for convex ``k``."""
    d = _points(direction, k.dimension).reshape(k.dimension)
    radii = np.asarray(radii, dtype=float)
    return k(radii[:, None] * d[None, :]) / (radii * np.linalg.norm(d))
