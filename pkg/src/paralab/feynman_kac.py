"""Monte Carlo solution of the linear system by the Feynman-Kac formula.

For the forward problem ``d_t u + b.Du = D^2u:a + f``, ``u(0) = g``, the
solution at horizon ``T - t`` is

    u(T - t, x) = E[g(X_T)] + E[int_t^T f(T - s, X_s) ds],

where ``X`` starts at ``x`` at time ``t`` and solves
``dX_s = -b(T - s, X_s) ds + sigma(T - s) dB_s`` with ``sigma sigma^* = 2a``.
Component ``i`` uses its own drift ``b_i`` and an independent Brownian motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from paralab import kernels
from paralab.field import Field
from paralab.heat import DiffusionSchedule


class UnsupportedConfiguration(ValueError):
    """Raised for inputs the Monte Carlo estimator deliberately does not handle."""


def cholesky_of_diffusion(schedule: DiffusionSchedule, t: float) -> np.ndarray:
    """Lower-triangular ``sigma`` with ``sigma sigma^* = 2 a(t)``."""
    a = schedule(t)
    if not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("diffusion matrix must be symmetric")
    try:
        return np.linalg.cholesky(2.0 * a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"diffusion matrix is not positive definite at t={t}") from exc


def sample_field(data, t: float, X: np.ndarray, r: int) -> np.ndarray:
    """Evaluate field-like data at points ``X`` (shape ``(m, d)``), returning ``(m, r)``.

    ``data`` is a ``Field`` (linear in time, multilinear in space), a callable
    ``(t, X) -> (m, r)``, a scalar, or ``None`` for zero.
    """
    m = X.shape[0]
    if data is None:
        return np.zeros((m, r))
    if isinstance(data, Field):
        tt = min(max(t, 0.0), float(data.times[-1]))
        out = kernels.interp_periodic(data.at_time(tt), data.grid.L, X)
    elif callable(data):
        out = np.asarray(data(t, X), dtype=float)
    else:
        out = np.full((m, r), float(data))
    out = out.reshape(m, -1)
    return np.broadcast_to(out, (m, r)) if out.shape[1] == 1 else out


@dataclass(frozen=True)
class SdeSpec:
    """Drift, diffusion and horizon of the time-reversed diffusion.

    ``drift`` gives the ``r`` stacked ``d``-vectors ``b_i``: a ``Field`` with
    ``r * d`` components (ordered ``i * d + j``), a callable
    ``(t, X) -> (m, r * d)``, or ``None``.
    """

    schedule: DiffusionSchedule
    T: float
    r: int = 1
    drift: object = None

    @property
    def d(self) -> int:
        return self.schedule.d

    def sigma(self, t: float) -> np.ndarray:
        return cholesky_of_diffusion(self.schedule, t)

    def drift_at(self, t: float, X: np.ndarray) -> np.ndarray:
        """Drift ``b(t, X)`` of shape ``(m, r, d)``."""
        vals = sample_field(self.drift, t, X, self.r * self.d)
        return vals.reshape(X.shape[0], self.r, self.d)

    def rescaled(self, factor: float) -> "SdeSpec":
        """Same problem with the drift multiplied by ``factor``."""
        base = self.drift
        if base is None:
            return self
        if isinstance(base, Field):
            new = base.scaled(factor)
        elif callable(base):
            new = lambda t, X: factor * np.asarray(base(t, X))  # noqa: E731
        else:
            new = factor * float(base)
        return SdeSpec(self.schedule, self.T, self.r, new)


@dataclass
class PathEnsemble:
    """Euler-Maruyama paths for every component.

    ``paths[i, k]`` holds the ``n_paths`` positions (shape ``(n_paths, d)``) of
    component ``i`` at time ``times[k]``.
    """

    spec: SdeSpec
    x0: np.ndarray
    t0: float
    n_paths: int
    n_steps: int
    seed: int
    times: np.ndarray
    paths: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1]


def _normals(seed: int, component: int, step: int, size: tuple[int, ...]) -> np.ndarray:
    # counter-based stream keyed by (seed, component, step); the path index is
    # the position inside the stream
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (component << 32) | step], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(size)


def simulate_paths(spec: SdeSpec, x, t: float, n_paths: int, n_steps: int, seed: int) -> PathEnsemble:
    """Simulate ``n_paths`` paths per component from ``x`` at time ``t`` to ``spec.T``."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0 <= t <= spec.T:
        raise ValueError(f"start time {t} outside [0, {spec.T}]")
    d, r = spec.d, spec.r
    x0 = np.asarray(x, dtype=float).reshape(d)
    times = np.linspace(t, spec.T, n_steps + 1)
    dt = (spec.T - t) / n_steps
    paths = np.empty((r, n_steps + 1, n_paths, d))
    paths[:, 0] = x0
    sq = math.sqrt(dt)
    for k in range(n_steps):
        s = times[k]
        # diffusion and drift are evaluated at reversed time T - s
        sig = spec.sigma(spec.T - s)
        for i in range(r):
            X = paths[i, k]
            b = spec.drift_at(spec.T - s, X)[:, i, :]
            dW = _normals(seed, i, k, (n_paths, d))
            paths[i, k + 1] = X - b * dt + sq * dW @ sig.T
    return PathEnsemble(spec, x0, float(t), int(n_paths), int(n_steps), int(seed), times, paths)


@dataclass
class FkEstimate:
    value: np.ndarray
    stderr: np.ndarray
    n_paths: int


def _mean_stderr(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = math.fsum(samples.tolist()) / n
    if n < 2:
        return mean, 0.0
    dev = samples - mean
    var = math.fsum((dev * dev).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def fk_estimate(ensemble: PathEnsemble, g, f=None, c=None) -> FkEstimate:
    """Estimate ``u(T - t, x)`` per component with its standard error.

    The running source is integrated along each path by the trapezoid rule.
    A non-zero zero-order coupling ``c`` makes the representation implicit in
    ``u``; that case is refused.
    """
    if c is not None and np.any(np.asarray(c.values if isinstance(c, Field) else c) != 0):
        raise UnsupportedConfiguration("the Monte Carlo estimator supports c = 0 only; use solve_linear")
    spec = ensemble.spec
    r = spec.r
    T = spec.T
    dt = (T - ensemble.t0) / ensemble.n_steps
    value = np.empty(r)
    stderr = np.empty(r)
    for i in range(r):
        samples = sample_field(g, 0.0, ensemble.paths[i, -1], r)[:, i].copy()
        if f is not None:
            run = np.zeros(ensemble.n_paths)
            prev = sample_field(f, T - ensemble.times[0], ensemble.paths[i, 0], r)[:, i]
            for k in range(1, ensemble.n_steps + 1):
                cur = sample_field(f, T - ensemble.times[k], ensemble.paths[i, k], r)[:, i]
                run += 0.5 * dt * (prev + cur)
                prev = cur
            samples += run
        value[i], stderr[i] = _mean_stderr(samples)
    return FkEstimate(value, stderr, ensemble.n_paths)


def default_steps(spec: SdeSpec, t: float, h: float) -> int:
    """Smallest step count with ``(T - t) / n_steps <= h``."""
    return max(1, math.ceil((spec.T - t) / h))


def fk_solve_point(spec: SdeSpec, g, f, x, tau: float, n_paths: int, n_steps: int, seed: int) -> FkEstimate:
    """Convenience wrapper: estimate ``u(tau, x)`` for the forward problem."""
    ens = simulate_paths(spec, x, spec.T - tau, n_paths, n_steps, seed)
    return fk_estimate(ens, g, f)

