"""Numpy reference implementations of the hot kernels.

These are the fallback when the compiled extension is unavailable, and the
oracle the extension is tested against.
"""

from __future__ import annotations

import numpy as np


def _as3(values: np.ndarray) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=float)
    return v.reshape(v.shape + (1,) * (3 - v.ndim))


def holder_ratio_max(values: np.ndarray, table: np.ndarray, h: float, gamma: float, periodic: bool = True) -> float:
    """Max of ``|v(x+delta) - v(x)| / |delta|^gamma`` over nodes and displacements.

    ``values`` is one component on a ``d``-dimensional grid and ``table`` a
    ``(K, d)`` integer array of displacements in grid units.  With
    ``periodic`` the grid is a torus; otherwise pairs leaving the box are
    skipped and the plain Euclidean distance is used.
    """
    values = np.asarray(values, dtype=float)
    d = values.ndim
    n = values.shape[0]
    best = 0.0
    for delta in np.asarray(table):
        if periodic:
            shifted = np.roll(values, tuple(-int(s) for s in delta), axis=tuple(range(d)))
            diff = shifted - values
        else:
            lo = tuple(slice(max(0, -int(s)), n - max(0, int(s))) for s in delta)
            hi = tuple(slice(max(0, int(s)), n + min(0, int(s))) for s in delta)
            diff = values[hi] - values[lo]
            if diff.size == 0:
                continue
        m = float(np.max(np.abs(diff)))
        if m == 0.0:
            continue
        a = np.abs(delta)
        wrapped = (np.minimum(a, n - a) if periodic else a).astype(float)
        dist = h * float(np.sqrt(np.sum(wrapped * wrapped)))
        best = max(best, m / dist**gamma)
    return best


def interp_periodic(values: np.ndarray, L: float, X: np.ndarray) -> np.ndarray:
    """Multilinear periodic interpolation.

    ``values`` has shape ``(r, n, ..., n)`` on the grid ``x_j = -L + j h``;
    ``X`` has shape ``(m, d)``.  Returns ``(m, r)``.
    """
    values = np.asarray(values, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = values.shape[0]
    d = values.ndim - 1
    n = values.shape[1]
    h = 2.0 * L / n
    s = (X + L) / h
    i0 = np.floor(s)
    w = s - i0
    i0 = i0.astype(np.int64) % n
    i1 = (i0 + 1) % n
    out = np.zeros((X.shape[0], r))
    for corner in range(1 << d):
        idx = []
        weight = np.ones(X.shape[0])
        for j in range(d):
            if corner >> j & 1:
                idx.append(i1[:, j])
                weight = weight * w[:, j]
            else:
                idx.append(i0[:, j])
                weight = weight * (1.0 - w[:, j])
        out += weight[:, None] * values[(slice(None),) + tuple(idx)].T
    return out
