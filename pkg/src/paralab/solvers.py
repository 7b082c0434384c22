"""Mild-formulation solvers for the linear, quasi-linear and non-linear systems.

All solvers use the forward convention

    d_t u + b.Du + c (x) u = D^2u : a + f,   u(0) = g,

with ``(b.Du)_i = <b_i, Du_i>`` and ``(c (x) u)_i = sum_j c_ij u_j``.  Time
stepping is Heun's method in the interaction picture: the heat part is
propagated exactly in Fourier space and the remaining terms are integrated
with second-order accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from paralab.bounds import BoundInputs, evaluate_chain
from paralab.field import Field, NormReport, SpaceGrid, gradient_values, norm_report
from paralab.heat import DiffusionSchedule, _cumulative_A, propagator
from paralab.operators import DriftOperator, FirstOrderNonlinearity, ZeroOrderOperator, vec_sup


class ConvergenceFailure(RuntimeError):
    """Picard iteration did not reach the tolerance; carries the trace and last iterate."""

    def __init__(self, message: str, trace: "IterationTrace", last: Field):
        super().__init__(message)
        self.trace = trace
        self.last = last


@dataclass(frozen=True)
class CoefficientSet:
    """Data of the linear system on a common time grid.

    ``b`` has either ``d`` components (one drift shared by every component of
    ``u``) or ``r * d`` components ordered ``i * d + j``.  ``c`` has ``r * r``
    components ordered ``i * r + j``.  ``b``, ``c`` and ``f`` may be ``None``
    and may be sampled at a single time, in which case they are constant in
    time.  ``g`` supplies the initial datum through its first snapshot.
    """

    schedule: DiffusionSchedule
    g: Field
    times: np.ndarray
    b: Field | None = None
    c: Field | None = None
    f: Field | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times[0] != 0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        object.__setattr__(self, "times", times)
        grid, r, d = self.g.grid, self.g.r, self.g.grid.d
        if self.schedule.d != d:
            raise ValueError("diffusion dimension does not match the grid")
        for name, data, allowed in (("b", self.b, (d, r * d)), ("c", self.c, (r * r,)), ("f", self.f, (r,))):
            if data is None:
                continue
            if data.grid != grid:
                raise ValueError(f"{name} lives on a different grid")
            if data.r not in allowed:
                raise ValueError(f"{name} has {data.r} components, expected one of {allowed}")
            if data.times.size > 1 and data.times[-1] < times[-1] * (1 - 1e-12):
                raise ValueError(f"{name} is not sampled up to T={times[-1]}")

    @property
    def grid(self) -> SpaceGrid:
        return self.g.grid

    @property
    def r(self) -> int:
        return self.g.r

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def with_(self, **changes) -> "CoefficientSet":
        return replace(self, **changes)


def _at(data: Field | None, t: float) -> np.ndarray | None:
    if data is None:
        return None
    if data.times.size == 1:
        return data.values[0]
    return data.at_time(min(t, float(data.times[-1])))


def _rhs(coeffs: CoefficientSet, t: float, u: np.ndarray) -> np.ndarray | None:
    """``-b.Du - c (x) u + f`` at time ``t``; ``None`` when identically zero."""
    grid, r, d = coeffs.grid, coeffs.r, coeffs.grid.d
    out = None
    b = _at(coeffs.b, t)
    if b is not None:
        Du = gradient_values(grid, u)
        if b.shape[0] == d:
            out = -np.einsum("j...,ij...->i...", b, Du)
        else:
            out = -np.sum(b.reshape((r, d) + grid.shape) * Du, axis=1)
    c = _at(coeffs.c, t)
    if c is not None:
        term = -np.einsum("ij...,j...->i...", c.reshape((r, r) + grid.shape), u)
        out = term if out is None else out + term
    f = _at(coeffs.f, t)
    if f is not None:
        out = f.copy() if out is None else out + f
    return out


def solve_linear(
    coeffs: CoefficientSet,
    grid: SpaceGrid | None = None,
    times: Sequence[float] | None = None,
    substeps: int = 1,
    check: bool = True,
) -> Field:
    """Solve the linear system and sample the solution at ``times``.

    Each output interval is split into ``substeps`` Heun steps.  Ellipticity
    of ``a`` is verified on probe vectors first (``check``).
    """
    grid = coeffs.grid if grid is None else grid
    if grid != coeffs.grid:
        raise ValueError("grid does not match the coefficients")
    times = coeffs.times if times is None else np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    if check:
        coeffs.schedule.check_ellipticity(times[:: max(1, times.size // 16)])
    fine = np.concatenate([np.linspace(t0, t1, substeps + 1)[:-1] for t0, t1 in zip(times[:-1], times[1:])] + [times[-1:]])
    Acum = _cumulative_A(coeffs.schedule, fine)
    out = np.empty((times.size, coeffs.r) + grid.shape)
    u = np.array(coeffs.g.values[0], dtype=float)
    out[0] = u
    uh = grid.fft(u)
    n0 = _rhs(coeffs, fine[0], u)
    E_prev = None
    for k in range(fine.size - 1):
        t0, t1 = fine[k], fine[k + 1]
        dt = t1 - t0
        if coeffs.schedule.constant and E_prev is not None and abs(dt - E_prev[0]) <= 1e-14 * t1:
            E = E_prev[1]
        else:
            E = propagator(grid, Acum[k + 1] - Acum[k])
            E_prev = (dt, E)
        if n0 is None:
            uh = E * uh
            u = grid.ifft(uh)
            n0 = _rhs(coeffs, t1, u)
        else:
            n0h = grid.fft(n0)
            pred = E * (uh + dt * n0h)
            n1 = _rhs(coeffs, t1, grid.ifft(pred))
            uh = E * uh + 0.5 * dt * (E * n0h + grid.fft(n1))
            u = grid.ifft(uh)
            n0 = _rhs(coeffs, t1, u)
        if (k + 1) % substeps == 0:
            out[(k + 1) // substeps] = u
    return Field(grid, coeffs.r, times, out)


# -- fixed-point drivers ---------------------------------------------------------------


@dataclass
class IterationTrace:
    """Per-iteration diagnostics of a Picard run."""

    residuals: list[float] = field(default_factory=list)
    reports: list[NormReport] = field(default_factory=list)
    flags: list[dict[str, bool]] = field(default_factory=list)
    bounds: dict[str, float] = field(default_factory=dict)
    converged: bool = False

    def __len__(self) -> int:
        return len(self.residuals)

    def rows(self) -> list[tuple]:
        out = []
        for k, res in enumerate(self.residuals):
            rep = self.reports[k] if k < len(self.reports) else None
            flags = self.flags[k] if k < len(self.flags) else {}
            out.append((k + 1, res, rep.l_inf if rep else float("nan"), all(flags.values()) if flags else True))
        return out


Monitor = Callable[[Field], float]


def _sup_over_time(field_: Field, fn: Callable[[np.ndarray], float]) -> float:
    return max(fn(field_.values[i]) for i in range(field_.times.size))


def uniform_monitor(u: Field) -> float:
    return float(np.max(np.abs(u.values)))


def _report(u: Field, gamma: float) -> NormReport:
    budget = None if u.grid.size <= 4096 else 8 * u.grid.size
    return norm_report(u, -1, gamma=gamma, pair_budget=budget)


def _picard(step, u0: Field, tol: float, max_iter: int, damping: float, monitors, gamma: float) -> tuple[Field, IterationTrace]:
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    trace = IterationTrace(bounds={k: v[0] for k, v in monitors.items()})
    u = u0
    for _ in range(max_iter):
        new = step(u)
        if damping < 1:
            new = Field(new.grid, new.r, new.times, (1 - damping) * u.values + damping * new.values)
        res = float(np.max(np.abs(new.values - u.values)))
        u = new
        trace.residuals.append(res)
        trace.reports.append(_report(u, gamma))
        trace.flags.append({k: bool(fn(u) <= bound) for k, (bound, fn) in monitors.items()})
        if res <= tol:
            trace.converged = True
            return u, trace
    raise ConvergenceFailure(f"Picard iteration did not reach tol={tol} in {max_iter} iterations", trace, u)


def _map_times(u: Field, fn: Callable[[float, np.ndarray], np.ndarray], r: int) -> Field:
    vals = np.stack([fn(t, u.values[i]) for i, t in enumerate(u.times)])
    return Field(u.grid, r, u.times, vals)


def _initial(coeffs: CoefficientSet, guess, substeps: int) -> Field:
    if guess is None:
        return solve_linear(coeffs.with_(b=None, c=None), substeps=substeps)
    if isinstance(guess, Field):
        return guess
    if guess == "zero":
        return Field(coeffs.grid, coeffs.r, coeffs.times, np.zeros((coeffs.times.size, coeffs.r) + coeffs.grid.shape))
    if guess == "g":
        return Field.constant_in_time(coeffs.grid, coeffs.g.values[0], coeffs.times)
    raise ValueError(f"unknown initial guess {guess!r}")


def quasi_unif_bound(coeffs: CoefficientSet, C: ZeroOrderOperator | None) -> float:
    """Drift-independent sup bound ``(||g|| + T||f||) exp(T c)`` in the pointwise Euclidean norm."""
    g_inf = vec_sup(coeffs.g.values[0])
    f_inf = 0.0 if coeffs.f is None else _sup_over_time(coeffs.f, vec_sup)
    c_inf = 0.0 if C is None else C.sup_envelope(coeffs.times)
    return evaluate_chain("unif", BoundInputs(T=coeffs.T, g_inf=g_inf, f_inf=f_inf, c_inf=c_inf))


def quasilinear_solve(
    A: DriftOperator,
    C: ZeroOrderOperator | None,
    coeffs: CoefficientSet,
    tol: float = 1e-10,
    max_iter: int = 100,
    initial_guess=None,
    damping: float = 1.0,
    substeps: int = 1,
    monitors: dict[str, tuple[float, Monitor]] | None = None,
    gamma: float = 0.5,
) -> tuple[Field, IterationTrace]:
    """Picard iteration for ``d_t u + A(u).Du = D^2u:a + C(u) + f``.

    Each step solves the linear system with the drift ``A(u_k)`` shared by all
    components and ``C(u_k)`` added to the source.  The trace always monitors
    the drift-independent uniform bound (``"unif"``, Euclidean sup norm);
    ``monitors`` adds ``name -> (bound, measure)`` pairs.
    """
    grid = coeffs.grid
    if coeffs.b is not None or coeffs.c is not None:
        raise ValueError("quasilinear_solve builds b and c from the operators; pass them as None")
    mons = {"unif": (quasi_unif_bound(coeffs, C), lambda u: _sup_over_time(u, vec_sup))}
    mons.update(monitors or {})

    def step(u: Field) -> Field:
        b = _map_times(u, lambda t, s: A.apply(s, grid), grid.d)
        f = coeffs.f
        if C is not None:
            cu = _map_times(u, C.apply, coeffs.r)
            f = cu if f is None else Field(grid, coeffs.r, coeffs.times, cu.values + _resample(f, coeffs.times))
        return solve_linear(coeffs.with_(b=b, f=f), substeps=substeps, check=False)

    coeffs.schedule.check_ellipticity(coeffs.times[:: max(1, coeffs.times.size // 16)])
    return _picard(step, _initial(coeffs, initial_guess, substeps), tol, max_iter, damping, mons, gamma)


def _resample(f: Field, times: np.ndarray) -> np.ndarray:
    return np.stack([_at(f, t) for t in times])


def _c_field(c, coeffs: CoefficientSet) -> Field | None:
    """Space-constant ``r x r`` coupling sampled on the coefficient times."""
    if c is None:
        return None
    r, grid = coeffs.r, coeffs.grid
    vals = []
    for t in coeffs.times:
        m = c(t) if callable(c) else c
        m = np.asarray(m, dtype=float)
        if m.ndim == 0:
            m = m * np.eye(r)
        vals.append(np.broadcast_to(m.reshape((r * r,) + (1,) * grid.d), (r * r,) + grid.shape))
    return Field(grid, r * r, coeffs.times, np.stack(vals))


def nonlinear_solve(
    P: FirstOrderNonlinearity,
    c,
    coeffs: CoefficientSet,
    tol: float = 1e-10,
    max_iter: int = 100,
    initial_guess=None,
    damping: float = 1.0,
    substeps: int = 1,
    monitors: dict[str, tuple[float, Monitor]] | None = None,
    gamma: float = 0.5,
) -> tuple[Field, IterationTrace]:
    """Picard iteration for ``d_t u + P(u, Du) + c(t) (x) u = D^2u:a + f``.

    ``c`` is ``None``, a scalar, an ``r x r`` matrix or a callable of ``t``.
    ``P(u_k, Du_k)`` is frozen into the source at each step.
    """
    grid = coeffs.grid
    cf = _c_field(c, coeffs)
    base_f = None if coeffs.f is None else _resample(coeffs.f, coeffs.times)

    def step(u: Field) -> Field:
        src = -np.stack([P.apply(u.values[i], gradient_values(grid, u.values[i])) for i in range(u.times.size)])
        if base_f is not None:
            src = src + base_f
        return solve_linear(coeffs.with_(b=None, c=cf, f=Field(grid, coeffs.r, coeffs.times, src)), substeps=substeps, check=False)

    coeffs.schedule.check_ellipticity(coeffs.times[:: max(1, coeffs.times.size // 16)])
    return _picard(step, _initial(coeffs.with_(c=cf), initial_guess, substeps), tol, max_iter, damping, monitors or {}, gamma)


def gradient_system_solve(
    P: FirstOrderNonlinearity,
    c,
    coeffs: CoefficientSet,
    u: Field | None = None,
    substeps: int = 1,
    **solve_kw,
) -> Field:
    """Solve the differentiated system for ``v = Du`` (``r * d`` components).

    Component ``v_{ij} = d_j u_i`` satisfies
    ``d_t v_ij + DP_i(Du_i).Dv_ij + (c (x) v_{.j})_i = D^2 v_ij : a + d_j f_i``
    with ``v(0) = Dg``.  The drift needs ``u``; when it is not supplied the
    non-linear problem is solved first.
    """
    if P.derivative is None:
        raise ValueError("the non-linearity does not provide its Gateaux derivative")
    grid, r, d = coeffs.grid, coeffs.r, coeffs.grid.d
    if u is None:
        u, _ = nonlinear_solve(P, c, coeffs, substeps=substeps, **solve_kw)
    times = coeffs.times
    # drift of v_ij is DP_i, shared over j
    drift = []
    for i_t in range(times.size):
        Du = gradient_values(grid, u.values[i_t])
        dp = P.derivative(Du)  # (r, d, *space)
        drift.append(np.repeat(dp[:, None], d, axis=1).reshape((r * d * d,) + grid.shape))
    b = Field(grid, r * d * d, times, np.stack(drift))
    g = Field(grid, r * d, [0.0], gradient_values(grid, coeffs.g.values[0]).reshape((1, r * d) + grid.shape))
    f = None
    if coeffs.f is not None:
        fv = np.stack([gradient_values(grid, coeffs.f.values[i]).reshape((r * d,) + grid.shape) for i in range(coeffs.f.times.size)])
        f = Field(grid, r * d, coeffs.f.times, fv)
    cv = None
    cf = _c_field(c, coeffs)
    if cf is not None:
        # (c (x) v_{.j})_i = sum_k c_ik v_kj, as an (r d) x (r d) coupling
        cm = cf.values.reshape((times.size, r, r) + grid.shape)
        big = np.einsum("tik...,jl->tijkl...", cm, np.eye(d)).reshape((times.size, (r * d) ** 2) + grid.shape)
        cv = Field(grid, (r * d) ** 2, times, big)
    vc = CoefficientSet(coeffs.schedule, g, times, b=b, c=cv, f=f)
    return solve_linear(vc, substeps=substeps)
