"""Proxy Gaussian kernel, semigroup and Green operator on the periodic box.

Everything acts in Fourier space: the proxy semigroup from ``s`` to ``t`` is
the multiplier ``exp(-<A_{t,s} xi, xi>)`` with ``A_{t,s}`` the integral of the
diffusion matrix, which is the exact heat propagator for a space-independent
``a(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from paralab.field import Field, SpaceGrid, gradient_values, hessian_values, linf_norm, make_grid


@dataclass(frozen=True)
class DiffusionSchedule:
    """Time-dependent diffusion matrix ``a(t)`` with ellipticity bounds.

    ``nu`` and ``a_sup`` are the constants of the uniform ellipticity
    assumption ``nu |x|^2 <= <a(t) x, x> <= a_sup |x|^2``.
    """

    a: Callable[[float], np.ndarray]
    nu: float
    a_sup: float
    d: int
    constant: bool = False

    @classmethod
    def isotropic(cls, d: int, nu: float) -> "DiffusionSchedule":
        return cls.from_matrix(nu * np.eye(d))

    @classmethod
    def from_matrix(cls, A) -> "DiffusionSchedule":
        A = np.array(A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        _check_symmetric(A)
        ev = np.linalg.eigvalsh(A)
        A.flags.writeable = False
        return cls(lambda t: A, float(ev[0]), float(ev[-1]), A.shape[0], constant=True)

    @classmethod
    def affine(cls, a0, a1, T: float) -> "DiffusionSchedule":
        """``a(t) = a0 + t a1``; the bounds are taken over ``[0, T]``."""
        a0 = np.array(a0, dtype=float)
        a1 = np.array(a1, dtype=float)
        _check_symmetric(a0)
        _check_symmetric(a1)
        ends = [np.linalg.eigvalsh(a0), np.linalg.eigvalsh(a0 + T * a1)]
        # eigenvalues of an affine family are concave/convex in t, so the
        # endpoints bound the extreme ones
        nu = min(e[0] for e in ends)
        a_sup = max(e[-1] for e in ends)
        return cls(lambda t: a0 + t * a1, float(nu), float(a_sup), a0.shape[0])

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.a(t), dtype=float)

    def check_ellipticity(self, times: Sequence[float], n_probe: int = 16, seed: int = 0) -> None:
        """Raise ``ValueError`` if a probe vector violates the ellipticity bounds."""
        if not self.nu > 0:
            raise ValueError(f"ellipticity constant must be positive, got {self.nu}")
        rng = np.random.default_rng(seed)
        probes = rng.standard_normal((n_probe, self.d))
        probes = np.vstack([np.eye(self.d), probes])
        sq = np.sum(probes**2, axis=1)
        tol = 1e-12 * max(1.0, self.a_sup)
        for t in times:
            a = self(t)
            if not np.allclose(a, a.T, atol=1e-12):
                raise ValueError(f"diffusion matrix is not symmetric at t={t}")
            quad = np.einsum("pi,ij,pj->p", probes, a, probes)
            if np.any(quad < self.nu * sq - tol) or np.any(quad > self.a_sup * sq + tol):
                raise ValueError(f"ellipticity violated at t={t}")


def _check_symmetric(A: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"diffusion must be a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("diffusion matrix must be symmetric")


@dataclass(frozen=True)
class AccumulatedDiffusion:
    s: float
    t: float
    A: np.ndarray


def accumulate_diffusion(schedule: DiffusionSchedule, t: float, s: float, quad_steps: int = 8) -> AccumulatedDiffusion:
    """``A_{s,t}``, the integral of ``a`` over ``[t, s]`` by composite Simpson."""
    if not s > t:
        raise ValueError(f"need s > t, got t={t}, s={s}")
    if schedule.constant:
        A = (s - t) * schedule(t)
    else:
        m = 2 * max(1, int(quad_steps))
        nodes = np.linspace(t, s, m + 1)
        w = np.ones(m + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (s - t) / (3 * m)
        A = sum(wi * schedule(si) for wi, si in zip(w, nodes))
        A = 0.5 * (A + A.T)
    return AccumulatedDiffusion(float(s), float(t), np.asarray(A, dtype=float))


def kernel_density(A, z) -> np.ndarray:
    """Gaussian density with covariance ``2A`` evaluated at ``z`` (last axis = space)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError("accumulated diffusion must be positive definite") from exc
    z = np.asarray(z, dtype=float)
    if d == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    y = np.linalg.solve(L, np.moveaxis(z, -1, 0).reshape(d, -1))
    quad = np.sum(y * y, axis=0).reshape(z.shape[:-1])
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return np.exp(-0.5 * d * math.log(4 * math.pi) - 0.5 * logdet - 0.25 * quad)


def envelope_density(nu: float, a_sup: float, dt: float, z, d: int) -> np.ndarray:
    """Isotropic upper envelope of ``kernel_density`` for ``nu I <= a <= a_sup I``."""
    z = np.asarray(z, dtype=float)
    if d == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    r2 = np.sum(z * z, axis=-1)
    return (4 * math.pi * nu * dt) ** (-d / 2) * np.exp(-r2 / (4 * a_sup * dt))


def _times_list(t) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.diff(ts) <= 0):
        raise ValueError("output times must be strictly increasing")
    return ts


def _cumulative_A(schedule: DiffusionSchedule, times: np.ndarray) -> np.ndarray:
    """``A_{s,0}`` for each ``s`` in ``times`` (shape ``(m, d, d)``)."""
    out = np.zeros((times.size, schedule.d, schedule.d))
    for i, s in enumerate(times):
        if s > 0:
            out[i] = accumulate_diffusion(schedule, 0.0, s).A
    return out


def propagator(grid: SpaceGrid, A: np.ndarray) -> np.ndarray:
    """Fourier multiplier ``exp(-<A xi, xi>)``."""
    return np.exp(-grid.quad_form(A))


def semigroup_apply(g_field: Field, schedule: DiffusionSchedule, t) -> Field:
    """Apply the proxy semigroup to the initial snapshot of ``g_field``.

    ``t`` may be a scalar or an increasing sequence; the result holds ``g`` at
    time 0 followed by the propagated data at every positive requested time.
    """
    grid = g_field.grid
    g = g_field.values[0]
    ts = _times_list(t)
    ts = ts[ts > 0]
    if ts.size == 0:
        return Field(grid, g_field.r, [0.0], g[None])
    gh = grid.fft(g)
    A = _cumulative_A(schedule, ts)
    out = np.empty((ts.size + 1, g_field.r) + grid.shape)
    out[0] = g
    for i in range(ts.size):
        out[i + 1] = grid.ifft(propagator(grid, A[i]) * gh)
    return Field(grid, g_field.r, np.concatenate([[0.0], ts]), out)


def _phi_psi(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``int_0^1 e^{-z s} ds`` and ``int_0^1 s e^{-z s} ds`` for ``z >= 0``."""
    small = z < 1e-2
    zs = np.where(small, 1.0, z)
    phi = np.where(small, 1 - z / 2 + z * z / 6 - z**3 / 24, -np.expm1(-zs) / zs)
    psi_big = (1 - np.exp(-zs) * (1 + zs)) / (zs * zs)
    psi_small = 0.5 - z / 3 + z * z / 8 - z**3 / 30 + z**4 / 144
    return phi, np.where(small, psi_small, psi_big)


def _quadrature_nodes(sample_times: np.ndarray, t: float, refine: int) -> np.ndarray:
    nodes = sample_times[(sample_times > 0) & (sample_times < t)]
    nodes = np.concatenate([[0.0], nodes, [t]])
    if refine > 0 and nodes.size >= 2:
        last = nodes[-1] - nodes[-2]
        extra = t - last * 0.5 ** np.arange(1, refine + 1)
        nodes = np.unique(np.concatenate([nodes, extra]))
    return nodes


def green_apply(f_field: Field, schedule: DiffusionSchedule, t, refine: int = 8) -> Field:
    """Proxy Green operator ``int_0^t P_{t,s} f(s) ds``.

    Between consecutive quadrature nodes ``f`` is interpolated linearly in
    time and the propagator weight is integrated exactly (exponential fitting),
    so the scheme is exact for time-independent ``f`` and constant ``a``.  The
    last interval is refined geometrically towards ``s = t`` (``refine``
    levels), where derivative probes see an integrable singularity.
    """
    grid = f_field.grid
    ts = _times_list(t)
    if ts[0] < 0 or ts[-1] > f_field.times[-1] * (1 + 1e-12) + 1e-15:
        raise ValueError(f"requested times outside sampled range [0, {f_field.times[-1]}]")
    ts = ts[ts > 0]
    out = np.zeros((ts.size + 1, f_field.r) + grid.shape)
    for k, tk in enumerate(ts):
        nodes = _quadrature_nodes(f_field.times, tk, refine)
        Acum = _cumulative_A(schedule, nodes)
        At = Acum[-1]
        acc = np.zeros((f_field.r,) + grid.spectral_shape, dtype=complex)
        fh_prev = grid.fft(f_field.at_time(nodes[0]))
        for j in range(nodes.size - 1):
            sa, sb = nodes[j], nodes[j + 1]
            fh_next = grid.fft(f_field.at_time(min(sb, f_field.times[-1])))
            Qa = grid.quad_form(At - Acum[j])
            Qb = grid.quad_form(At - Acum[j + 1])
            z = np.maximum(Qa - Qb, 0.0)
            phi, psi = _phi_psi(z)
            # tau = (sb - s)/(sb - sa): weight psi attaches to the left sample
            acc += (sb - sa) * np.exp(-Qb) * ((phi - psi) * fh_next + psi * fh_prev)
            fh_prev = fh_next
        out[k + 1] = grid.ifft(acc)
    return Field(grid, f_field.r, np.concatenate([[0.0], ts]), out)


@dataclass
class ScalingProbe:
    order: int
    gamma: float
    T: np.ndarray
    norms: np.ndarray
    slope: float
    expected: float

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(T), float(v), self.slope) for T, v in zip(self.T, self.norms)]


def expected_slope(order: int, gamma: float) -> float:
    return {0: 1.0, 1: (1 + gamma) / 2, 2: gamma / 2}[order]


def kernel_scaling_probe(
    order: int,
    gamma: float,
    T_sweep: Sequence[float],
    schedule: DiffusionSchedule | None = None,
    grid: SpaceGrid | None = None,
    zeta: Field | None = None,
) -> ScalingProbe:
    """Fit the log-log slope of ``||D^order G zeta||_inf`` against the horizon.

    The default test field is ``|sin x|^gamma`` on ``[-pi, pi)`` with 4096
    nodes, whose cusp at the origin makes the small-horizon behaviour sharp.
    ``zeta`` is held constant in time, so the Green operator is evaluated
    exactly by ``green_apply``.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    T_sweep = np.asarray(T_sweep, dtype=float)
    if T_sweep.size < 4:
        raise ValueError("the sweep needs at least 4 horizons")
    if grid is None:
        grid = zeta.grid if zeta is not None else make_grid(1, 4096, math.pi)
    if schedule is None:
        schedule = DiffusionSchedule.isotropic(grid.d, 1.0)
    if zeta is None:
        snap = np.abs(np.sin(grid.mesh[0])) ** gamma
        zeta = Field.constant_in_time(grid, snap, [0.0, float(T_sweep.max())])
    G = green_apply(zeta, schedule, np.sort(T_sweep), refine=0)
    norms = np.empty(T_sweep.size)
    for i in range(T_sweep.size):
        snap = G.values[i + 1]
        if order == 0:
            norms[i] = float(np.max(np.abs(snap)))
        elif order == 1:
            g = gradient_values(grid, snap)
            norms[i] = float(np.max(np.sqrt(np.sum(g * g, axis=1))))
        else:
            hs = hessian_values(grid, snap)
            norms[i] = float(np.max(np.sqrt(np.sum(hs * hs, axis=(1, 2)))))
    Ts = np.sort(T_sweep)
    slope = float(np.polyfit(np.log(Ts), np.log(norms), 1)[0])
    return ScalingProbe(order, gamma, Ts, norms, slope, expected_slope(order, gamma))


def sup_norm(field: Field, time_index: int = -1) -> float:
    return linf_norm(field, time_index)
