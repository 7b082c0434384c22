"""Drift operators, zero-order operators and first-order non-linearities.

Sup norms of vector-valued data are taken pointwise in the Euclidean norm
over components, ``||b|| = max_x |b(x)|``; every envelope below is stated for
that norm and holds exactly on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from paralab.field import SpaceGrid


def vec_sup(snap: np.ndarray) -> float:
    """``max_x |b(x)|`` for a snapshot of shape ``(m, *space)``."""
    return float(np.max(np.sqrt(np.sum(np.asarray(snap) ** 2, axis=0))))


def _euclid(snap: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(snap * snap, axis=0))


@dataclass(frozen=True)
class DriftOperator:
    """``A(u)``: maps an ``r``-component snapshot to a ``d``-component drift.

    ``M`` bounds ``||A(b)||`` in terms of ``||b||``; ``Mtilde(x, y)`` is the
    Lipschitz envelope ``||A(b1) - A(b2)|| <= ||b1 - b2|| Mtilde(||b1||, ||b2||)``.
    ``M`` is ``None`` for kinds without a sup-norm envelope (the Leray drift).
    """

    kind: str
    fn: Callable[[np.ndarray, SpaceGrid], np.ndarray]
    M: Callable[[float], float] | None
    Mtilde: Callable[[float, float], float] | None
    params: dict = field(default_factory=dict)

    def apply(self, snap: np.ndarray, grid: SpaceGrid) -> np.ndarray:
        out = np.asarray(self.fn(np.asarray(snap, dtype=float), grid), dtype=float)
        if out.shape != (grid.d,) + grid.shape:
            raise ValueError(f"drift operator {self.kind} returned shape {out.shape}")
        return out


def identity_burgers() -> DriftOperator:
    """``A(u) = u`` (requires ``r = d``): the multidimensional Burgers drift."""

    def fn(u, grid):
        if u.shape[0] != grid.d:
            raise ValueError("the Burgers drift needs r = d components")
        return u

    return DriftOperator("identity_burgers", fn, lambda x: x, lambda x, y: 1.0)


def _power(u: np.ndarray, k: float) -> np.ndarray:
    return _euclid(u) ** k * u


def power_drift(k: float) -> DriftOperator:
    """``A(u) = |u|^k u``; its derivative has norm ``(k+1)|u|^k``."""
    if k < 0:
        raise ValueError("power must be non-negative")

    def fn(u, grid):
        if u.shape[0] < grid.d:
            _fail_r(u, grid)
        return _power(u[: grid.d], k)

    return DriftOperator(
        "power",
        fn,
        lambda x: x ** (k + 1),
        lambda x, y: (k + 1) * max(x, y) ** k,
        {"k": k},
    )


def _fail_r(u, grid):
    raise ValueError(f"drift needs at least d={grid.d} components, got {u.shape[0]}")


class _Mollifier:
    """Discrete Gaussian convolution on one grid, applied by FFT."""

    def __init__(self, grid: SpaceGrid, width: float):
        self.grid = grid
        self.mult = np.exp(-0.5 * width**2 * grid.k2)
        kernel = grid.ifft(self.mult) / grid.cell_volume
        self.l1 = float(np.sum(np.abs(kernel)) * grid.cell_volume)

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self.grid.ifft(self.mult * self.grid.fft(w))


def mollified_drift(grid: SpaceGrid, k: float = 0.0, width: float | None = None) -> DriftOperator:
    """``A(u) = rho * (|u|^k u)`` with a normalized Gaussian ``rho`` (default width ``L/8``).

    The envelopes use the exact discrete ``||rho||_1`` of the grid kernel.
    """
    width = grid.L / 8 if width is None else float(width)
    moll = _Mollifier(grid, width)

    def fn(u, g):
        if g != grid:
            raise ValueError("mollified drift was built for a different grid")
        if u.shape[0] < g.d:
            _fail_r(u, g)
        return moll(_power(u[: g.d], k))

    r1 = moll.l1
    return DriftOperator(
        "mollified",
        fn,
        lambda x: r1 * x ** (k + 1),
        lambda x, y: r1 * (k + 1) * max(x, y) ** k,
        {"k": k, "width": width, "rho_l1": r1},
    )


def exponential_drift() -> DriftOperator:
    """``A(u) = exp(|u|) u``; its derivative has norm at most ``e^{|u|}(1 + |u|)``."""

    def fn(u, grid):
        if u.shape[0] < grid.d:
            _fail_r(u, grid)
        v = u[: grid.d]
        return np.exp(_euclid(v)) * v

    return DriftOperator(
        "exponential",
        fn,
        lambda x: x * math.exp(x),
        lambda x, y: math.exp(max(x, y)) * (1 + max(x, y)),
    )


def leray_drift() -> DriftOperator:
    """``A(u) = P u``, the Leray projection (``r = d``).  No sup-norm envelope."""
    from paralab.leray import project_snapshot

    def fn(u, grid):
        if u.shape[0] != grid.d:
            raise ValueError("the Leray drift needs r = d components")
        return project_snapshot(grid, u)

    return DriftOperator("leray", fn, None, None)


def custom_drift(fn, M=None, Mtilde=None, name: str = "custom") -> DriftOperator:
    return DriftOperator(name, fn, M, Mtilde)


def zero_drift() -> DriftOperator:
    return DriftOperator("zero", lambda u, grid: np.zeros((grid.d,) + grid.shape), lambda x: 0.0, lambda x, y: 0.0)


DRIFT_KINDS = ("identity_burgers", "power", "mollified", "exponential")


def make_drift(kind: str, grid: SpaceGrid | None = None, **params) -> DriftOperator:
    if kind == "identity_burgers":
        return identity_burgers()
    if kind == "power":
        return power_drift(params.get("k", 1.0))
    if kind == "mollified":
        if grid is None:
            raise ValueError("the mollified drift needs a grid")
        return mollified_drift(grid, params.get("k", 0.0), params.get("width"))
    if kind == "exponential":
        return exponential_drift()
    if kind == "leray":
        return leray_drift()
    if kind == "zero":
        return zero_drift()
    raise ValueError(f"unknown drift kind {kind!r}")


# -- zero-order operators ------------------------------------------------------


@dataclass(frozen=True)
class ZeroOrderOperator:
    """``C(u)``, entering the right-hand side, with ``||C(b)(t)|| <= c(t) ||b(t)||``."""

    kind: str
    fn: Callable[[float, np.ndarray], np.ndarray]
    envelope: Callable[[float], float]

    def apply(self, t: float, snap: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(t, np.asarray(snap, dtype=float)), dtype=float)

    def sup_envelope(self, times) -> float:
        return max(self.envelope(float(t)) for t in times)


def linear_c(c) -> ZeroOrderOperator:
    """``C(b) = c b`` for an ``r x r`` matrix ``c`` (constant, callable of ``t``,
    or an array ``(r, r, *space)`` varying in space).  Envelope: sup of the
    pointwise Frobenius norm, which dominates the operator norm."""
    if callable(c):
        cf = lambda t: np.asarray(c(t), dtype=float)  # noqa: E731
    else:
        arr = np.asarray(c, dtype=float)
        cf = lambda t: arr  # noqa: E731

    def fn(t, b):
        m = cf(t)
        if m.ndim == 2:
            return np.tensordot(m, b, axes=(1, 0))
        return np.einsum("ij...,j...->i...", m, b)

    def env(t):
        m = cf(t)
        return float(np.max(np.sqrt(np.sum(m * m, axis=(0, 1)))))

    return ZeroOrderOperator("linear_c", fn, env)


def sublinear_custom(fn, envelope) -> ZeroOrderOperator:
    return ZeroOrderOperator("sublinear_custom", fn, envelope)


def zero_c() -> ZeroOrderOperator:
    return ZeroOrderOperator("zero", lambda t, b: np.zeros_like(b), lambda t: 0.0)


# -- first-order non-linearities -----------------------------------------------------


@dataclass(frozen=True)
class FirstOrderNonlinearity:
    """``P(u, Du)`` with envelope ``||P(c, b)|| <= M_P(||b||)(1 + ||c||)``.

    ``derivative(Du)`` returns, for each component ``i``, the drift
    ``(r, d, *space)`` of the Gateaux derivative of ``P_i`` with respect to
    ``Du_i`` (block-diagonal non-linearities only).
    """

    kind: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    M_P: Callable[[float], float]
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    M_DP: Callable[[float], float] | None = None
    Mtilde: Callable[[float, float, float, float], float] | None = None

    def apply(self, u: np.ndarray, Du: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(u, Du), dtype=float)


def kpz() -> FirstOrderNonlinearity:
    """``P_i = |Du_i|^2``; derivative drift ``2 Du_i``."""
    return FirstOrderNonlinearity(
        "kpz_square_gradient",
        lambda u, Du: np.sum(Du * Du, axis=1),
        lambda x: x * x,
        lambda Du: 2.0 * Du,
        lambda x: 2.0 * x,
        lambda x1, x2, c1, c2: x1 + x2,
    )


def zero_nonlinearity() -> FirstOrderNonlinearity:
    return FirstOrderNonlinearity(
        "zero",
        lambda u, Du: np.zeros_like(u),
        lambda x: 0.0,
        lambda Du: np.zeros_like(Du),
        lambda x: 0.0,
        lambda x1, x2, c1, c2: 0.0,
    )


def custom_nonlinearity(fn, M_P, derivative=None, M_DP=None) -> FirstOrderNonlinearity:
    return FirstOrderNonlinearity("custom", fn, M_P, derivative, M_DP)
