"""Small numerical helpers shared across modules."""

import math
from functools import lru_cache

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@lru_cache(maxsize=None)
def hermgauss_normal(n: int):
    """Nodes/weights for E[f(Z)], Z ~ N(0, 1), as ``sum(w * f(z))``."""
    z, w = np.polynomial.hermite.hermgauss(n)
    z = z * math.sqrt(2.0)
    w = w / math.sqrt(math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def golden_section_max(f, a: float, b: float, tol: float):
    """Maximize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    a, b = min(a, b), max(a, b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    if fc >= fd:
        return c, fc
    return d, fd


def bin_positions(u: np.ndarray, width: float):
    """Histogram on the lattice ``width * (i + 1/2)``; returns occupied centers and counts."""
    idx = np.floor(u / width).astype(np.int64)
    ids, counts = np.unique(idx, return_counts=True)
    return (ids + 0.5) * width, counts.astype(float)
