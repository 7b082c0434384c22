"""Measured norms of data and solutions, packaged for the bound chains.

Conventions: ``x_inf`` of a scalar or vector field is the max-abs entry;
gradient and Hessian sup norms are pointwise Euclidean (Frobenius) lengths;
Hölder moduli are torus estimates (max over components and sample times);
the sup norm of a coupling matrix ``c`` is its largest absolute row sum, the
operator norm that makes the componentwise Grönwall argument exact.
"""

from __future__ import annotations

import numpy as np

from paralab.bounds import BoundInputs
from paralab.field import Field, SpaceGrid, gradient_values, hessian_values, holder_seminorm


def _budget(grid: SpaceGrid, budget: int | None) -> int | None:
    if budget is not None:
        return budget
    return None if grid.size <= 4096 else 16 * grid.size


def snap_field(grid: SpaceGrid, snap: np.ndarray) -> Field:
    return Field(grid, snap.shape[0], [0.0], snap[None])


def snap_holder(grid: SpaceGrid, snap: np.ndarray, gamma: float, budget: int | None = None) -> float:
    snap = snap.reshape((-1,) + grid.shape)
    return holder_seminorm(snap_field(grid, snap), 0, gamma, _budget(grid, budget))


def sup_abs(field: Field | None) -> float:
    return 0.0 if field is None else float(np.max(np.abs(field.values)))


def sup_grad(grid: SpaceGrid, snaps) -> float:
    return max(float(np.max(np.sqrt(np.sum(gradient_values(grid, s) ** 2, axis=1)))) for s in snaps)


def sup_hess(grid: SpaceGrid, snaps) -> float:
    return max(float(np.max(np.sqrt(np.sum(hessian_values(grid, s) ** 2, axis=(1, 2))))) for s in snaps)


def sup_holder(field: Field | None, gamma: float, budget: int | None = None, every: int = 1) -> float:
    if field is None:
        return 0.0
    idx = range(0, field.times.size, every)
    return max(holder_seminorm(field, i, gamma, _budget(field.grid, budget)) for i in idx)


def c_row_sum(c: Field | None, r: int) -> float:
    if c is None:
        return 0.0
    m = np.abs(c.values).reshape((c.times.size, r, r) + c.grid.shape)
    return float(np.max(np.sum(m, axis=2)))


def c_holder(c: Field | None, gamma: float) -> float:
    return sup_holder(c, gamma)


def linear_inputs(coeffs, gamma: float, C: float = 1.0) -> BoundInputs:
    """Norms of ``(b, c, f, g)`` for the linear chains."""
    grid = coeffs.grid
    g0 = coeffs.g.values[0]
    return BoundInputs(
        T=coeffs.T,
        nu=coeffs.schedule.nu,
        gamma=gamma,
        f_inf=sup_abs(coeffs.f),
        f_holder=sup_holder(coeffs.f, gamma),
        g_inf=float(np.max(np.abs(g0))),
        dg_inf=sup_grad(grid, [g0]),
        d2g_inf=sup_hess(grid, [g0]),
        d2g_holder=snap_holder(grid, hessian_values(grid, g0), gamma),
        b_inf=sup_abs(coeffs.b),
        b_holder=sup_holder(coeffs.b, gamma),
        c_inf=c_row_sum(coeffs.c, coeffs.r),
        c_holder=c_holder(coeffs.c, gamma),
        C=C,
    )


def solution_norms(u: Field, gamma: float, every: int = 1) -> dict[str, float]:
    """Sup over sample times of the norms the chains bound."""
    grid = u.grid
    snaps = [u.values[i] for i in range(0, u.times.size, every)]
    dt = np.gradient(u.values, u.times, axis=0)
    dt_field = Field(grid, u.r, u.times, dt)
    return {
        "u_inf": sup_abs(u),
        "du_inf": sup_grad(grid, snaps),
        "d2u_inf": sup_hess(grid, snaps),
        "d2u_holder": max(snap_holder(grid, hessian_values(grid, s), gamma) for s in snaps),
        "dtu_inf": float(np.max(np.abs(dt[1:]))),
        "dtu_holder": max(holder_seminorm(dt_field, i, gamma, _budget(grid, None)) for i in range(1, u.times.size, every)),
    }


def _beta(grid: SpaceGrid, snap: np.ndarray, beta: float) -> float:
    weight = 1.0 + grid.radius**beta
    return float(np.max(weight * np.max(np.abs(snap.reshape((-1,) + grid.shape)), axis=0)))


def semi_ns_inputs(f: Field | None, g: Field, nu: float, T: float, beta: float, gamma: float, C: float = 1.0, Cp: float = 1.0) -> BoundInputs:
    """Norms of the data for the semi Navier-Stokes chains."""
    grid = g.grid
    g0 = g.values[0]
    vol = grid.cell_volume
    if f is None:
        f_inf = f_holder = f_beta = df_beta = f_l2 = 0.0
    else:
        fs = [f.values[i] for i in range(f.times.size)]
        f_inf = sup_abs(f)
        f_holder = sup_holder(f, gamma)
        f_beta = max(_beta(grid, s, beta) for s in fs)
        df_beta = max(_beta(grid, gradient_values(grid, s), beta) for s in fs)
        sq = [float(np.sum(s * s)) * vol for s in fs]
        f_l2 = float(np.sqrt(T * sq[0] if len(sq) == 1 else np.trapezoid(sq, f.times)))
    return BoundInputs(
        T=T,
        nu=nu,
        gamma=gamma,
        beta=beta,
        f_inf=f_inf,
        f_holder=f_holder,
        f_beta=f_beta,
        df_beta=df_beta,
        f_l2=f_l2,
        g_inf=float(np.max(np.abs(g0))),
        g_beta=_beta(grid, g0, beta),
        g_l2=float(np.sqrt(np.sum(g0 * g0) * vol)),
        dg_inf=sup_grad(grid, [g0]),
        dg_beta=_beta(grid, gradient_values(grid, g0), beta),
        d2g_inf=sup_hess(grid, [g0]),
        d2g_beta=_beta(grid, hessian_values(grid, g0), beta),
        d2g_holder=snap_holder(grid, hessian_values(grid, g0), gamma),
        C=C,
        Cp=Cp,
    )
