"""Leray projector, Calderón-Zygmund probe and the semi Navier-Stokes solver.

The semi Navier-Stokes system is

    d_t u + (P u).Du = nu Lap u + f,   u(0) = g,   d = r = 3,

where ``P`` is the Leray projector onto divergence-free fields.  It is solved
as a quasi-linear problem with the drift ``A(u) = P u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from paralab.field import Field, SpaceGrid, beta_weighted_norm, gradient_values, hessian_values, l2_norm, linf_norm, lp_norm
from paralab.heat import DiffusionSchedule
from paralab.operators import leray_drift
from paralab.solvers import CoefficientSet, IterationTrace, _at, quasilinear_solve


def require_vector_field3(v: Field) -> Field:
    """Check the ``d = r = 3`` shape of a velocity-like field."""
    if v.grid.d != 3 or v.r != 3:
        raise ValueError(f"expected a 3-D vector field, got d={v.grid.d}, r={v.r}")
    return v


def project_snapshot(grid: SpaceGrid, v: np.ndarray) -> np.ndarray:
    """``v - xi <xi, v> / |xi|^2`` in Fourier space; the zero mode is kept.

    Nyquist wavenumbers are dropped from ``xi`` (as for first derivatives), so
    the projector stays real, idempotent and self-adjoint on the grid.
    """
    d = grid.d
    vh = grid.fft(v)
    ks = [np.broadcast_to(grid.k(j), grid.spectral_shape) for j in range(d)]
    k2 = sum(k * k for k in ks)
    safe = np.where(k2 == 0, 1.0, k2)
    dot = sum(ks[j] * vh[j] for j in range(d)) / safe
    out = np.stack([vh[j] - ks[j] * dot for j in range(d)])
    return grid.ifft(out)


def divergence(grid: SpaceGrid, v: np.ndarray) -> np.ndarray:
    vh = grid.fft(v)
    return grid.ifft(sum(1j * grid.k(j) * vh[j] for j in range(grid.d)))


def leray_project(v: Field, time_index: int | None = None) -> Field:
    """Project one snapshot (``time_index``) or every snapshot (``None``)."""
    require_vector_field3(v)
    if time_index is None:
        vals = np.stack([project_snapshot(v.grid, v.values[i]) for i in range(v.times.size)])
        return Field(v.grid, 3, v.times, vals)
    return Field(v.grid, 3, [0.0], project_snapshot(v.grid, v.values[time_index])[None])


def random_trig_field(grid: SpaceGrid, rng: np.random.Generator, modes: int = 3, r: int | None = None) -> np.ndarray:
    """Random real trigonometric polynomial with wavenumbers ``|m_j| <= modes``."""
    r = grid.d if r is None else r
    vh = np.zeros((r,) + grid.spectral_shape, dtype=complex)
    idx = [np.r_[0 : modes + 1, grid.n - modes : grid.n] for _ in range(grid.d - 1)] + [np.arange(modes + 1)]
    sub = np.ix_(*idx)
    shape = tuple(len(i) for i in idx)
    for c in range(r):
        block = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        vh[c][sub] = block
    return grid.ifft(vh) * grid.size


@dataclass
class CzProbe:
    p: float
    ratios: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    @property
    def mean_ratio(self) -> float:
        return float(self.ratios.mean())


def cz_probe(p: float, n_samples: int, grid: SpaceGrid | None = None, seed: int = 0, modes: int = 3, divergence_free: bool = False) -> CzProbe:
    """Empirical ``max ||P phi||_p / ||phi||_p`` over random trigonometric fields."""
    if not (1 < p < math.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    grid = grid if grid is not None else SpaceGrid(3, 16, math.pi)
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    for s in range(n_samples):
        phi = random_trig_field(grid, rng, modes)
        if divergence_free:
            phi = project_snapshot(grid, phi)
        num = lp_norm(Field(grid, grid.d, [0.0], project_snapshot(grid, phi)[None]), 0, p)
        den = lp_norm(Field(grid, grid.d, [0.0], phi[None]), 0, p)
        ratios[s] = num / den
    return CzProbe(float(p), ratios)


# -- energy bookkeeping ---------------------------------------------------------------


@dataclass
class EnergyLedger:
    """Time series of the energy balance.

    ``dissipation`` stores ``2 nu int_0^t ||Du||^2`` and ``forcing`` stores
    ``||g||^2 + 2 int_0^t int f.u``, so that
    ``energy + dissipation = forcing`` up to ``residual``.
    """

    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    forcing: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.energy + self.dissipation - self.forcing

    @property
    def relative_residual(self) -> float:
        scale = max(float(np.max(np.abs(self.forcing))), 1e-300)
        return float(np.max(np.abs(self.residual))) / scale if np.any(self.forcing) else float(np.max(np.abs(self.residual)))

    def rows(self) -> list[tuple[float, float, float, float, float]]:
        return list(zip(*(a.tolist() for a in (self.times, self.energy, self.dissipation, self.forcing, self.residual))))


def energy_ledger(u: Field, f: Field | None, g: Field, nu: float) -> EnergyLedger:
    """Trapezoid quadratures of the energy identity for a computed solution."""
    grid = u.grid
    if g.grid != grid or (f is not None and f.grid != grid):
        raise ValueError("u, f and g must share a grid")
    vol = grid.cell_volume
    energy = np.array([float(np.sum(u.values[i] ** 2)) * vol for i in range(u.times.size)])
    grad2 = np.array([float(np.sum(gradient_values(grid, u.values[i]) ** 2)) * vol for i in range(u.times.size)])
    dissipation = 2 * nu * cumulative_trapezoid(grad2, u.times, initial=0.0)
    if f is None:
        work = np.zeros(u.times.size)
    else:
        fu = np.array([float(np.sum(_at(f, t) * u.values[i])) * vol for i, t in enumerate(u.times)])
        work = 2 * cumulative_trapezoid(fu, u.times, initial=0.0)
    g2 = float(np.sum(g.values[0] ** 2)) * vol
    return EnergyLedger(u.times.copy(), energy, dissipation, g2 + work)


def energy_bound(f: Field | None, g: Field, T: float) -> float:
    """``sqrt(2) ||g||^2 + 2 ||f||^2_{L^2 L^2}`` (time quadrature by trapezoid)."""
    g2 = l2_norm(g, 0) ** 2
    if f is None:
        return math.sqrt(2) * g2
    if f.times.size == 1:
        f2 = T * l2_norm(f, 0) ** 2
    else:
        f2 = float(np.trapezoid([l2_norm(f, i) ** 2 for i in range(f.times.size)], f.times))
    return math.sqrt(2) * g2 + 2 * f2


def semi_ns_solve(
    f: Field | None,
    g: Field,
    nu: float,
    grid: SpaceGrid | None = None,
    times=None,
    tol: float = 1e-8,
    max_iter: int = 60,
    substeps: int = 1,
) -> tuple[Field, EnergyLedger, IterationTrace]:
    """Picard solve of the semi Navier-Stokes system with its energy ledger."""
    require_vector_field3(g)
    grid = g.grid if grid is None else grid
    if times is None:
        raise ValueError("times are required")
    coeffs = CoefficientSet(DiffusionSchedule.isotropic(3, nu), g, np.asarray(times, dtype=float), f=f)
    T = coeffs.T
    bound = energy_bound(f, g, T)
    monitors = {"ns_energy": (1.01 * bound, lambda u: max(l2_norm(u, i) ** 2 for i in range(u.times.size)))}
    u, trace = quasilinear_solve(leray_drift(), None, coeffs, tol=tol, max_iter=max_iter, substeps=substeps, monitors=monitors)
    return u, energy_ledger(u, f, g, nu), trace


def semi_ns_direct(f: Field | None, g: Field, nu: float, times, substeps: int = 4) -> Field:
    """Integrate the semi Navier-Stokes system directly, without Picard iteration.

    Heun steps in the interaction picture with the full non-linear term
    ``-(P u).Du + f`` re-evaluated at every stage; used as an independent
    reference for ``semi_ns_solve``.
    """
    require_vector_field3(g)
    grid = g.grid
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")

    def rhs(t, u):
        out = -np.einsum("j...,ij...->i...", project_snapshot(grid, u), gradient_values(grid, u))
        return out if f is None else out + _at(f, t)

    u = np.array(g.values[0], dtype=float)
    out = np.empty((times.size, 3) + grid.shape)
    out[0] = u
    uh = grid.fft(u)
    for i, (t0, t1) in enumerate(zip(times[:-1], times[1:])):
        dt = (t1 - t0) / substeps
        E = np.exp(-nu * dt * grid.k2)
        for k in range(substeps):
            t = t0 + k * dt
            n0h = grid.fft(rhs(t, u))
            pred = grid.ifft(E * (uh + dt * n0h))
            uh = E * uh + 0.5 * dt * (E * n0h + grid.fft(rhs(t + dt, pred)))
            u = grid.ifft(uh)
        out[i + 1] = u
    return Field(grid, 3, times, out)


def divergence_series(u: Field) -> np.ndarray:
    """``max |div u|`` at every sample time (a diagnostic only)."""
    return np.array([float(np.max(np.abs(divergence(u.grid, u.values[i])))) for i in range(u.times.size)])


# -- decay diagnostics ---------------------------------------------------------------------


@dataclass
class DecayReport:
    beta: float
    times: np.ndarray
    u_beta: np.ndarray
    du_beta: np.ndarray
    d2u_beta: np.ndarray
    dtu_beta: np.ndarray
    flags: dict[str, bool]

    def rows(self) -> list[tuple]:
        return list(zip(*(a.tolist() for a in (self.times, self.u_beta, self.du_beta, self.d2u_beta, self.dtu_beta))))

    def sups(self) -> dict[str, float]:
        return {
            "ns_u_beta": float(self.u_beta.max()),
            "ns_du_beta": float(self.du_beta.max()),
            "ns_d2_beta": float(self.d2u_beta.max()),
            "ns_dt_beta": float(self.dtu_beta.max()),
        }


def _beta_snap(grid: SpaceGrid, snap: np.ndarray, beta: float) -> float:
    weight = 1.0 + grid.radius**beta
    return float(np.max(weight * np.max(np.abs(snap.reshape((-1,) + grid.shape)), axis=0)))


def time_derivative(u: Field, nu: float | None = None, f: Field | None = None) -> np.ndarray:
    """``d_t u`` from the equation when ``nu`` is given, else by finite differences in time."""
    grid = u.grid
    if nu is None:
        if u.times.size < 2:
            raise ValueError("a finite-difference time derivative needs two sample times; pass nu")
        return np.gradient(u.values, u.times, axis=0)
    out = np.empty_like(u.values)
    for i, t in enumerate(u.times):
        s = u.values[i]
        lap = np.trace(hessian_values(grid, s), axis1=1, axis2=2)
        drift = project_snapshot(grid, s)
        Du = gradient_values(grid, s)
        out[i] = nu * lap - np.einsum("j...,ij...->i...", drift, Du)
        if f is not None:
            out[i] += _at(f, t)
    return out


def beta_decay_report(
    u: Field,
    beta: float,
    nu: float | None = None,
    f: Field | None = None,
    bounds: dict[str, float] | None = None,
) -> DecayReport:
    """Weighted norms of ``u``, ``Du``, ``D^2u`` and ``d_t u`` at every sample time.

    ``bounds`` maps the chain ids ``ns_u_beta``, ``ns_du_beta``,
    ``ns_d2_beta``, ``ns_dt_beta`` to calibrated bound values; the flags record
    whether the sup over time of each series stays below them.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    grid = u.grid
    dt = time_derivative(u, nu, f)
    n = u.times.size
    ub = np.array([beta_weighted_norm(u, i, beta) for i in range(n)])
    dub = np.array([_beta_snap(grid, gradient_values(grid, u.values[i]), beta) for i in range(n)])
    d2b = np.array([_beta_snap(grid, hessian_values(grid, u.values[i]), beta) for i in range(n)])
    dtb = np.array([_beta_snap(grid, dt[i], beta) for i in range(n)])
    rep = DecayReport(float(beta), u.times.copy(), ub, dub, d2b, dtb, {})
    if bounds:
        sups = rep.sups()
        rep.flags = {k: bool(sups[k] <= v) for k, v in bounds.items() if k in sups}
    return rep


def poisson_queue_ratio(u: Field, beta: float, time_index: int = -1) -> float:
    """``max_j ||P d_j u||_{beta-2} / ||Du||_beta`` for ``beta > 2``."""
    if beta <= 2:
        raise ValueError("the queue ratio needs beta > 2")
    grid = u.grid
    Du = gradient_values(grid, u.values[time_index])  # (r, d, *space)
    num = max(_beta_snap(grid, project_snapshot(grid, Du[:, j]), beta - 2) for j in range(grid.d))
    return num / _beta_snap(grid, Du, beta)


def semi_ns_linf(u: Field) -> float:
    return max(linf_norm(u, i) for i in range(u.times.size))
