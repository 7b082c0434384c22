"""Closed-form oracles obtained from the Cole-Hopf transform.

Both oracles reduce a non-linear problem to a Gaussian expectation
``E[h(Y)]`` with ``Y ~ N(x, 2 nu t)``, evaluated here by a dense trapezoid
rule in the standardized variable.  The code shares nothing with the
spectral solvers, so it serves as an independent check.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def _gauss_nodes(n: int = 4001, width: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    z = np.linspace(-width, width, n)
    w = np.full(n, z[1] - z[0])
    w[0] = w[-1] = 0.5 * (z[1] - z[0])
    return z, np.log(w) - 0.5 * z * z


def burgers_colehopf(x, t: float, nu: float, g, G, n: int = 4001) -> np.ndarray:
    """Viscous Burgers ``u_t + u u_x = nu u_xx`` in one dimension.

    ``g`` is the initial datum and ``G`` an antiderivative of it.  With
    ``phi0 = exp(-G / (2 nu))`` the solution is
    ``u = E[g(Y) phi0(Y)] / E[phi0(Y)]``.
    """
    x = np.asarray(x, dtype=float)
    if t == 0:
        return g(x)
    z, logw = _gauss_nodes(n)
    Y = x[..., None] + np.sqrt(2 * nu * t) * z
    logphi = -G(Y) / (2 * nu) + logw
    # shift by the max exponent; the common factor cancels in the ratio
    w = np.exp(logphi - logphi.max(axis=-1, keepdims=True))
    return np.sum(g(Y) * w, axis=-1) / np.sum(w, axis=-1)


def kpz_colehopf(x, t: float, nu: float, g, n: int = 4001) -> np.ndarray:
    """``u_t + |u_x|^2 = nu u_xx`` in one dimension: ``u = -nu log E[exp(-g(Y)/nu)]``."""
    x = np.asarray(x, dtype=float)
    if t == 0:
        return g(x)
    z, logw = _gauss_nodes(n)
    Y = x[..., None] + np.sqrt(2 * nu * t) * z
    norm = logsumexp(logw)
    return -nu * (logsumexp(-g(Y) / nu + logw, axis=-1) - norm)

