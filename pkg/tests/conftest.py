import math

import numpy as np
import pytest


def golden_min(f, a, b, tol=1e-12):
    """Plain golden-section minimizer, kept separate from the package."""
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def grid_then_golden(f, lo, hi, points=20001):
    xs = np.linspace(lo, hi, points)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmin(vals))
    step = xs[1] - xs[0]
    return golden_min(f, xs[i] - step, xs[i] + step)


@pytest.fixture
def oracle_prox():
    """1D prox by dense search: argmin_y k(y) + (y - x)^2 / (2 lam)."""
    def prox(k, lam, x):
        return grid_then_golden(lambda y: k(y) + (y - x) ** 2 / (2 * lam),
                                -abs(x) - 2, abs(x) + 2)
    return prox


@pytest.fixture
def oracle_conjugate():
    """1D Legendre transform by dense search on a fixed box."""
    def conj(k, r, radius=20.0):
        y = grid_then_golden(lambda x: k(x) - x * r, -radius, radius)
        return y * r - k(y)
    return conj


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
