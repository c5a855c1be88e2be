"""Central finite-difference oracle shared by the gradient tests."""
from __future__ import annotations

import numpy as np

H = 1e-4
REL_TOL = 1e-3


def rel_error(a, b) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(f, x, h=H, max_coords=None, rng=None):
    """Central differences of scalar f at x (array modified in place, then restored).

    With `max_coords`, only a random subset of coordinates is probed; the
    returned index array says which.
    """
    flat = x.reshape(-1)
    idx = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False))
    g = np.empty(len(idx))
    for n, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[n] = (fp - fm) / (2 * h)
    return g, idx


def check(f, analytic, x, max_coords=None, rng=None):
    """Relative error between `analytic` (same shape as x) and central differences of f."""
    num, idx = numeric_grad(f, x, max_coords=max_coords, rng=rng)
    return rel_error(np.ravel(analytic)[idx], num)
