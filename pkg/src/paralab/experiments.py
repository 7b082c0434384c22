"""The named experiments, their calibration families and result persistence.

Every experiment is a function ``(params, rng) -> Outcome``.  ``run`` writes
the outcome's tables as CSV into the experiment directory, adds optional SVG
plots, and records a manifest with checksums of every output.  Nothing in a
CSV depends on wall-clock time, so identical specs reproduce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from paralab import __version__
from paralab.bounds import CHAINS, KPZ_ENVELOPES, BoundInputs, BoundLedger, Envelopes, evaluate_chain, taupe_falsification
from paralab.calibration import CalibrationResult, CalibrationSample, calibrate
from paralab.feynman_kac import SdeSpec, fk_estimate, simulate_paths
from paralab.field import Field, gradient_values, make_grid
from paralab.heat import DiffusionSchedule, kernel_scaling_probe
from paralab.leray import (
    beta_decay_report,
    divergence_series,
    energy_bound,
    poisson_queue_ratio,
    random_trig_field,
    semi_ns_direct,
    semi_ns_linf,
    semi_ns_solve,
)
from paralab.measure import linear_inputs, semi_ns_inputs, solution_norms, sup_grad, sup_hess
from paralab.operators import DRIFT_KINDS, kpz, linear_c, make_drift, vec_sup
from paralab.reference import burgers_colehopf, kpz_colehopf
from paralab.solvers import CoefficientSet, ConvergenceFailure, gradient_system_solve, nonlinear_solve, quasilinear_solve, solve_linear

EXPERIMENT_IDS = (
    "heat-kernel-scaling",
    "linear-bounds",
    "fk-vs-spectral",
    "burgers-colehopf",
    "quasi-operator-suite",
    "semi-ns-energy",
    "semi-ns-decay",
    "kpz-demo",
    "bound-ledger-report",
)


@dataclass
class Table:
    header: list[str]
    rows: list[tuple] = field(default_factory=list)


@dataclass
class Outcome:
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict[str, object] = field(default_factory=dict)
    calibrations: dict[str, CalibrationResult] = field(default_factory=dict)
    plots: list[Callable] = field(default_factory=list)


def experiment_rng(seed: int, exp_id: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(exp_id.encode())])


def _smooth_1d(rng, x, amp, modes=3):
    """Random trigonometric polynomial with sup norm at most ``amp``."""
    a = rng.uniform(-1, 1, modes)
    b = rng.uniform(-1, 1, modes)
    k = np.arange(1, modes + 1)
    val = sum(a[j] * np.cos(k[j] * x) + b[j] * np.sin(k[j] * x) for j in range(modes))
    return amp * val / (np.sum(np.abs(a)) + np.sum(np.abs(b)))


def _dial(dials: dict[str, float], calibrations: dict, family: str, samples, calibrate_mode: bool) -> float:
    """Dial for a family: stored value unless recalibration is requested or none exists."""
    if calibrate_mode or family not in dials:
        res = calibrate(family, samples)
        calibrations[family] = res
        return res.C
    return dials[family]


# -- heat-kernel-scaling ---------------------------------------------------------------------


def exp_heat_kernel_scaling(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    Ts = np.geomspace(p["T_min"], p["T_max"], p["n_T"])
    grid = make_grid(1, p["n"], math.pi)
    sched = DiffusionSchedule.isotropic(1, p["nu"])
    rows, fits = [], []
    for gamma in p["gammas"]:
        for order in p["orders"]:
            probe = kernel_scaling_probe(order, gamma, Ts, sched, grid)
            rows += [(gamma, order, T, v, probe.slope) for T, v, _ in probe.rows()]
            ok = abs(probe.slope - probe.expected) <= p["slope_tol"]
            fits.append((gamma, order, probe.slope, probe.expected, ok))
    out.tables["scaling"] = Table(["gamma", "order", "T", "norm", "fitted_slope"], rows)
    out.tables["slopes"] = Table(["gamma", "order", "fitted_slope", "expected_slope", "within_tol"], fits)
    out.summary["all_slopes_within_tol"] = all(r[-1] for r in fits)

    def plot(ax_factory):
        fig, ax = ax_factory()
        for gamma in p["gammas"]:
            for order in p["orders"]:
                sel = [(r[2], r[3]) for r in rows if r[0] == gamma and r[1] == order]
                ax.loglog(*zip(*sel), marker="o", label=f"order {order}, gamma {gamma}")
        ax.set_xlabel("T")
        ax.set_ylabel("sup norm")
        ax.legend(fontsize=6)
        return fig, "scaling"

    out.plots.append(plot)
    return out


# -- linear-bounds ------------------------------------------------------------------------------


def linear_trial(p: dict, rng, drift_scale: float = 1.0):
    """One random smooth linear problem ``(b, c, f, g)`` with ``d = 1`` and ``r = 2``."""
    grid = make_grid(1, p["n"], math.pi)
    r = 2
    times = np.linspace(0, p["T"], p["n_times"])
    x = grid.nodes
    g = Field(grid, r, [0.0], np.stack([_smooth_1d(rng, x, p["g_amp"]) for _ in range(r)])[None])
    fb = np.stack([_smooth_1d(rng, x, p["f_amp"]) for _ in range(r)])
    f = Field.constant_in_time(grid, fb, [0.0])
    bb = np.stack([_smooth_1d(rng, x, p["b_amp"]) for _ in range(r)])
    phase = rng.uniform(0, 2 * math.pi)
    b = Field(grid, r, times, np.stack([bb * (1 + 0.5 * math.sin(4 * t + phase)) for t in times]))
    cm = rng.uniform(-1, 1, (r, r))
    cm *= p["c_amp"] / np.max(np.sum(np.abs(cm), axis=1))
    c = Field(grid, r * r, [0.0], np.broadcast_to(cm.reshape(r * r, 1), (r * r, grid.n))[None])
    coeffs = CoefficientSet(DiffusionSchedule.isotropic(1, p["nu"]), g, times, b=b, c=c, f=f)
    return coeffs, coeffs.with_(b=b.scaled(drift_scale))


LINEAR_CHAINS = {
    "grad_linear": "du_inf",
    "hess_linear": "d2u_inf",
    "hess_holder_linear": "d2u_holder",
    "dt_unif_linear": "dtu_inf",
    "dt_holder_linear": "dtu_holder",
}


def linear_family_samples(p: dict, rng) -> tuple[list[CalibrationSample], list[tuple]]:
    samples, rows = [], []
    for trial in range(p["trials"]):
        coeffs, scaled = linear_trial(p, rng, p["drift_scale"])
        u = solve_linear(coeffs, substeps=p["substeps"])
        us = solve_linear(scaled, substeps=p["substeps"])
        inp = linear_inputs(coeffs, p["gamma"])
        inp_s = linear_inputs(scaled, p["gamma"])
        unif = evaluate_chain("unif", inp)
        unif_s = evaluate_chain("unif", inp_s)
        meas = solution_norms(u, p["gamma"], every=p["holder_every"])
        rows.append((trial, "unif", meas["u_inf"], unif, meas["u_inf"] <= 1.01 * unif))
        rows.append((trial, "unif_scaled_drift", float(np.max(np.abs(us.values))), unif_s, float(np.max(np.abs(us.values))) <= 1.01 * unif_s))
        rows.append((trial, "unif_bound_equal", unif, unif_s, unif == unif_s))
        for chain, key in LINEAR_CHAINS.items():
            samples.append(CalibrationSample(chain, inp, meas[key]))
    return samples, rows


def transport_samples(p: dict, n: int) -> tuple[CalibrationSample, float]:
    """Constant transport of a smooth bump; returns the grad sample and the 4x-reference error."""

    def solve(nn):
        grid = make_grid(1, nn, math.pi)
        times = np.linspace(0, p["transport_T"], p["transport_steps"] + 1)
        g = Field.from_function(grid, lambda t, x: np.exp(-2 * (1 - np.cos(x[0]))))
        b = Field(grid, 1, [0.0], np.ones((1, 1, nn)))
        co = CoefficientSet(DiffusionSchedule.isotropic(1, p["transport_nu"]), g, times, b=b)
        return co, solve_linear(co, substeps=p["transport_substeps"])

    co, u = solve(n)
    _, ref = solve(4 * n)
    err = float(np.max(np.abs(u.values[-1, 0] - ref.values[-1, 0, ::4])))
    inp = linear_inputs(co, p["gamma"])
    return CalibrationSample("grad_linear", inp, sup_grad(u.grid, u.values)), err


def exp_linear_bounds(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    samples, rows = linear_family_samples(p, rng)
    C = _dial(dials, out.calibrations, "linear", samples, calibrate_mode)
    out.tables["uniform_bound"] = Table(["trial", "check", "measured", "bound", "ok"], rows)
    out.tables["linear_chains"] = Table(
        ["chain", "measured", "bound", "C", "compliant"],
        [(s.chain, s.measured, s.value(C), C, s.measured <= s.value(C)) for s in samples],
    )
    trows, Cs = [], []
    for n in p["transport_n"]:
        s, err = transport_samples(p, n)
        res = calibrate(f"transport-{n}", [s])
        Cs.append(res.C)
        trows.append((n, s.measured, res.C, err))
    out.tables["transport"] = Table(["n", "grad_sup", "calibrated_C", "error_vs_4x"], trows)
    out.summary.update(
        unif_all_ok=all(r[-1] for r in rows),
        linear_C=C,
        transport_C_ratio=max(Cs) / min(Cs),
        transport_max_error=max(r[3] for r in trows),
    )
    return out


# -- fk-vs-spectral ------------------------------------------------------------------------------


def exp_fk_vs_spectral(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    grid = make_grid(1, p["n"], math.pi)
    x = grid.nodes
    times = np.linspace(0, p["T"], p["n_times"])
    g = Field(grid, 1, [0.0], _smooth_1d(rng, x, p["g_amp"])[None, None])
    f = Field(grid, 1, [0.0], _smooth_1d(rng, x, p["f_amp"])[None, None])
    b = Field(grid, 1, [0.0], _smooth_1d(rng, x, p["b_amp"])[None, None])
    sched = DiffusionSchedule.isotropic(1, p["nu"])
    coeffs = CoefficientSet(sched, g, times, b=b, f=f)
    u = solve_linear(coeffs, substeps=p["substeps"])
    spec = SdeSpec(sched, p["T"], 1, b)
    bound_inp = BoundInputs(T=p["T"], f_inf=float(np.max(np.abs(f.values))), g_inf=float(np.max(np.abs(g.values))), c_inf=0.0)
    unif = evaluate_chain("unif", bound_inp)
    rows = []
    h = grid.h
    seed = int(rng.integers(2**32))
    for k in range(p["probes"]):
        j = int(rng.integers(grid.n))
        ti = int(rng.integers(1, times.size))
        tau = float(times[ti])
        dt = tau / p["n_steps"]
        ens = simulate_paths(spec, [x[j]], p["T"] - tau, p["n_paths"], p["n_steps"], seed + k)
        est = fk_estimate(ens, g, f)
        ref = float(u.values[ti, 0, j])
        tol = 3 * (est.stderr[0] + 2 * h * h + 2 * dt)
        diff = abs(est.value[0] - ref)
        rows.append((x[j], tau, est.value[0], est.stderr[0], ref, diff, tol, diff <= tol, abs(est.value[0]) <= unif + 3 * est.stderr[0]))
    out.tables["probes"] = Table(["x", "t", "fk_estimate", "stderr", "spectral", "abs_diff", "tolerance", "agree", "within_unif"], rows)
    # rescaled drift: the bound is computed from f, g, c only and cannot change
    scaled = simulate_paths(spec.rescaled(10.0), [x[0]], 0.0, p["n_paths"] // 10, p["n_steps"], seed + 999)
    est_s = fk_estimate(scaled, g, f)
    out.tables["drift_rescaled"] = Table(
        ["drift_scale", "estimate", "stderr", "bound", "compliant"],
        [(10.0, est_s.value[0], est_s.stderr[0], unif, abs(est_s.value[0]) <= unif + 3 * est_s.stderr[0])],
    )
    out.summary.update(all_agree=all(r[7] for r in rows), all_within_unif=all(r[8] for r in rows))
    return out


# -- burgers-colehopf ---------------------------------------------------------------------------------


def burgers_problem(n: int, p: dict) -> CoefficientSet:
    grid = make_grid(1, n, math.pi)
    g = Field.from_function(grid, lambda t, x: -np.sin(x[0]))
    return CoefficientSet(DiffusionSchedule.isotropic(1, p["nu"]), g, np.linspace(0, p["T"], p["n_times"]))


def burgers_oracle(grid, p: dict) -> np.ndarray:
    return burgers_colehopf(grid.nodes, p["T"], p["nu"], lambda y: -np.sin(y), lambda y: np.cos(y) - 1)


def exp_burgers_colehopf(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    rows, trace_rows = [], []
    A = make_drift("identity_burgers")
    for n in p["resolutions"]:
        co = burgers_problem(n, p)
        u, tr = quasilinear_solve(A, None, co, tol=p["tol"], max_iter=p["max_iter"])
        err = float(np.max(np.abs(u.values[-1, 0] - burgers_oracle(co.grid, p))))
        rows.append((n, err, len(tr), tr.flags[-1]["unif"]))
        trace_rows += [(n, k, res, l_inf, ok) for k, res, l_inf, ok in tr.rows()]
    co = burgers_problem(p["resolutions"][-1], p)
    u1, _ = quasilinear_solve(A, None, co, tol=p["tol"], max_iter=p["max_iter"], initial_guess="zero")
    u2, _ = quasilinear_solve(A, None, co, tol=p["tol"], max_iter=p["max_iter"], initial_guess="g")
    gap = float(np.max(np.abs(u1.values - u2.values)))
    out.tables["error_vs_resolution"] = Table(["n", "linf_error", "iterations", "unif_compliant"], rows)
    out.tables["trace"] = Table(["n", "iteration", "residual", "l_inf", "flags_ok"], trace_rows)
    out.tables["uniqueness"] = Table(["guess_a", "guess_b", "max_gap"], [("zero", "g", gap)])
    out.summary.update(max_error_finest=rows[-1][1], uniqueness_gap=gap)
    return out


# -- quasi-operator-suite ---------------------------------------------------------------------------------


def exp_quasi_operator_suite(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    grid = make_grid(p["d"], p["n"], math.pi)
    rows = []
    for kind in DRIFT_KINDS:
        op = make_drift(kind, grid, k=p["power_k"])
        for s in range(p["samples"]):
            a1, a2 = rng.uniform(0.05, p["amp_max"], 2)
            b1 = random_trig_field(grid, rng, 2)
            b2 = b1 + 0.3 * random_trig_field(grid, rng, 2) / vec_sup(b1)
            b1 *= a1 / vec_sup(b1)
            b2 *= a2 / vec_sup(b2)
            n1, n2 = vec_sup(b1), vec_sup(b2)
            lhs = vec_sup(op.apply(b1, grid))
            rows.append((kind, "P_A", s, lhs, op.M(n1), lhs <= op.M(n1) * (1 + 1e-12)))
            lip = vec_sup(op.apply(b1, grid) - op.apply(b2, grid))
            rhs = vec_sup(b1 - b2) * op.Mtilde(n1, n2)
            rows.append((kind, "F", s, lip, rhs, lip <= rhs * (1 + 1e-12)))
    for s in range(p["samples"]):
        b = random_trig_field(grid, rng, 2)
        b *= rng.uniform(0.05, p["amp_max"]) / vec_sup(b)
        cm = rng.uniform(-1, 1, (grid.d, grid.d) + grid.shape)
        C = linear_c(cm)
        lhs = vec_sup(C.apply(0.0, b))
        rhs = C.envelope(0.0) * vec_sup(b)
        rows.append(("linear_c", "P_C", s, lhs, rhs, lhs <= rhs * (1 + 1e-12)))
    P = kpz()
    for s in range(p["samples"]):
        u = random_trig_field(grid, rng, 2, r=1)
        Du = gradient_values(grid, u)
        Du *= rng.uniform(0.05, p["amp_max"]) / vec_sup(Du[0])
        lhs = float(np.max(np.abs(P.apply(u, Du))))
        rhs = P.M_P(vec_sup(Du[0])) * (1 + float(np.max(np.abs(u))))
        rows.append(("kpz_square_gradient", "P_P", s, lhs, rhs, lhs <= rhs * (1 + 1e-12)))
    out.tables["envelopes"] = Table(["kind", "assumption", "sample", "lhs", "rhs", "ok"], rows)
    # one small quasi-linear solve per drift kind
    sgrid = make_grid(1, p["solve_n"], math.pi)
    times = np.linspace(0, p["solve_T"], p["n_times"])
    g = Field.from_function(sgrid, lambda t, x: p["solve_amp"] * np.sin(x[0]))
    co = CoefficientSet(DiffusionSchedule.isotropic(1, p["solve_nu"]), g, times)
    srows = []
    for kind in DRIFT_KINDS:
        op = make_drift(kind, sgrid, k=p["power_k"])
        try:
            u, tr = quasilinear_solve(op, linear_c(np.array([[p["solve_c"]]])), co, tol=p["tol"], max_iter=p["max_iter"])
            srows.append((kind, True, len(tr), tr.residuals[-1], float(np.max(np.abs(u.values))), tr.bounds["unif"], tr.flags[-1]["unif"]))
        except ConvergenceFailure as exc:
            srows.append((kind, False, len(exc.trace), exc.trace.residuals[-1], float(np.max(np.abs(exc.last.values))), exc.trace.bounds["unif"], exc.trace.flags[-1]["unif"]))
    out.tables["solves"] = Table(["kind", "converged", "iterations", "final_residual", "u_inf", "unif_bound", "unif_compliant"], srows)
    out.summary.update(all_envelopes_ok=all(r[-1] for r in rows), all_solves_compliant=all(r[-1] for r in srows))
    return out


# -- semi-ns-energy ---------------------------------------------------------------------------------------


def energy_problem(p: dict, nu: float):
    grid = make_grid(3, p["n"], math.pi)
    times = np.linspace(0, p["T"], p["n_times"])
    g = Field.from_function(grid, lambda t, x: p["g_amp"] * np.stack([np.sin(x[1]), np.sin(x[2]), np.sin(x[0])]), r=3)
    f = Field.from_function(grid, lambda t, x: p["f_amp"] * np.stack([np.cos(x[2]), np.cos(x[0]), np.sin(x[0] + x[1])]), r=3)
    return grid, times, g, f


def exp_semi_ns_energy(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    rows, ledger_rows = [], []
    nus = [p["nu"], p["nu"] / 2] if p["halve_nu"] else [p["nu"]]
    for nu in nus:
        grid, times, g, f = energy_problem(p, nu)
        u, led, tr = semi_ns_solve(f, g, nu, times=times, tol=p["tol"], max_iter=p["max_iter"], substeps=p["substeps"])
        e_bound = energy_bound(f, g, p["T"])
        linf_bound = p["T"] * float(np.max(np.abs(f.values))) + float(np.max(np.abs(g.values)))
        linf = semi_ns_linf(u)
        slack = 2 * (p["T"] / (p["n_times"] - 1) + grid.h**2) * float(np.max(np.abs(f.values)))
        div = divergence_series(u)
        rows.append(
            (nu, led.relative_residual, float(led.energy.max()), e_bound, float(led.energy.max()) <= 1.01 * e_bound, linf, linf_bound, linf <= linf_bound + slack, len(tr), float(div[-1]))
        )
        ledger_rows += [(nu,) + r for r in led.rows()]
    out.tables["energy_ledger"] = Table(["nu", "t", "energy", "dissipation", "forcing", "residual"], ledger_rows)
    out.tables["summary"] = Table(
        ["nu", "relative_residual", "max_energy", "energy_bound", "energy_ok", "u_linf", "linf_bound", "linf_ok", "iterations", "final_max_divergence"], rows
    )
    # divergence-free eigenfield, f = 0: Picard solution vs the direct integrator at 2x resolution
    gfn = lambda t, x: np.stack([np.sin(x[1]), np.sin(x[2]), np.sin(x[0])])  # noqa: E731
    n = p["eigen_n"]
    times = np.linspace(0, p["T"], p["n_times"])
    g = Field.from_function(make_grid(3, n, math.pi), gfn, r=3)
    gf = Field.from_function(make_grid(3, 2 * n, math.pi), gfn, r=3)
    u, led, _ = semi_ns_solve(None, g, p["nu"], times=times, tol=p["tol"], max_iter=p["max_iter"], substeps=p["substeps"])
    ref = semi_ns_direct(None, gf, p["nu"], times, 2 * p["substeps"])
    gap = float(np.max(np.abs(u.values - ref.values[:, :, ::2, ::2, ::2])))
    div = divergence_series(u)
    out.tables["eigenfield"] = Table(["t", "max_divergence"], list(zip(times.tolist(), div.tolist())))
    out.summary.update(
        eigenfield_gap=gap,
        eigenfield_residual=led.relative_residual,
        relative_residual=rows[0][1],
        energy_ok=all(r[4] for r in rows),
        linf_ok=all(r[7] for r in rows),
        bounds_nu_independent=len({(r[3], r[6]) for r in rows}) == 1,
    )
    return out


# -- semi-ns-decay ----------------------------------------------------------------------------------------------


def decay_problem(p: dict, n: int):
    grid = make_grid(3, n, p["L"])
    times = np.linspace(0, p["T"], p["n_times"])
    w = p["width"]
    amp = p["amp"]

    def g_fn(t, x):
        bump = np.exp(-np.sum(x * x, axis=0) / (2 * w * w))
        return amp * np.stack([bump, -0.5 * bump, 0.25 * bump])

    return grid, times, Field.from_function(grid, g_fn, r=3)


DECAY_CHAINS = ("ns_u_beta", "ns_du_beta", "ns_d2_beta", "ns_dt_beta")


def decay_family_samples(p: dict):
    grid, times, g = decay_problem(p, p["n"])
    u, _, tr = semi_ns_solve(None, g, p["nu"], times=times, tol=p["tol"], max_iter=p["max_iter"], substeps=p["substeps"])
    rep = beta_decay_report(u, p["beta"], nu=p["nu"])
    inp = semi_ns_inputs(None, g, p["nu"], p["T"], p["beta"], p["gamma"])
    sups = rep.sups()
    return [CalibrationSample(c, inp, sups[c]) for c in DECAY_CHAINS], u, rep, inp


def exp_semi_ns_decay(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    samples, u, rep, inp = decay_family_samples(p)
    C = _dial(dials, out.calibrations, "semi-ns-decay", samples, calibrate_mode)
    bounds = {s.chain: s.value(C) for s in samples}
    rep = beta_decay_report(u, p["beta"], nu=p["nu"], bounds=bounds)
    out.tables["decay"] = Table(["t", "u_beta", "du_beta", "d2u_beta", "dtu_beta"], rep.rows())
    out.tables["compliance"] = Table(["chain", "measured_sup", "bound", "C", "compliant"], [(k, rep.sups()[k], bounds[k], C, rep.flags[k]) for k in DECAY_CHAINS])
    prow = []
    for n in p["poisson_n"]:
        if n == p["n"]:
            un = u
        else:
            grid, times, g = decay_problem(p, n)
            un, _, _ = semi_ns_solve(None, g, p["nu"], times=times, tol=p["tol"], max_iter=p["max_iter"], substeps=p["substeps"])
        prow.append((n, poisson_queue_ratio(un, p["beta"])))
    out.tables["poisson_queue"] = Table(["n", "C_fit"], prow)
    fits = [r[1] for r in prow]
    finite = all(np.all(np.isfinite(a)) for a in (rep.u_beta, rep.du_beta, rep.d2u_beta, rep.dtu_beta))
    out.summary.update(all_finite=finite, all_compliant=all(rep.flags.values()), decay_C=C, poisson_drift=max(fits) / min(fits))
    return out


# -- kpz-demo --------------------------------------------------------------------------------------------------------


def kpz_problem(p: dict):
    grid = make_grid(1, p["n"], math.pi)
    times = np.linspace(0, p["T"], p["n_times"])
    g = Field.from_function(grid, lambda t, x: p["g_amp"] * np.cos(x[0]))
    return CoefficientSet(DiffusionSchedule.isotropic(1, p["nu"]), g, times)


def kpz_inputs(co: CoefficientSet, kappa: float, C: float = 1.0) -> BoundInputs:
    g0 = co.g.values[0]
    return BoundInputs(
        T=co.T,
        nu=co.schedule.nu,
        f_inf=0.0,
        df_inf=0.0,
        g_inf=float(np.max(np.abs(g0))),
        dg_inf=sup_grad(co.grid, [g0]),
        d2g_inf=sup_hess(co.grid, [g0]),
        c_inf=abs(kappa),
        C=C,
    )


def exp_kpz_demo(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    co = kpz_problem(p)
    P = kpz()
    rows, samples = [], []
    for kappa in (0.0, p["kappa"]):
        c = None if kappa == 0 else kappa
        u, tr = nonlinear_solve(P, c, co, tol=p["tol"], max_iter=p["max_iter"])
        v = gradient_system_solve(P, c, co, u=u)
        gap = max(float(np.max(np.abs(v.values[i] - gradient_values(co.grid, u.values[i]).reshape(v.values[i].shape)))) for i in range(u.times.size))
        inp = kpz_inputs(co, kappa)
        du = sup_grad(co.grid, u.values)
        d2 = sup_hess(co.grid, u.values)
        nl_du = evaluate_chain("nl_du", inp, KPZ_ENVELOPES)
        oracle_err = float("nan")
        if kappa == 0:
            ex = kpz_colehopf(co.grid.nodes, p["T"], p["nu"], lambda y: p["g_amp"] * np.cos(y))
            oracle_err = float(np.max(np.abs(u.values[-1, 0] - ex)))
        samples.append(CalibrationSample("nl_d2", inp, d2, KPZ_ENVELOPES))
        rows.append((kappa, len(tr), oracle_err, gap, du, nl_du, du <= nl_du, d2))
    C = _dial(dials, out.calibrations, "nonlinear", samples, calibrate_mode)
    out.tables["kpz"] = Table(["kappa", "iterations", "oracle_error", "gradient_system_gap", "du_sup", "nl_du_bound", "nl_du_compliant", "d2u_sup"], rows)
    out.tables["nl_d2"] = Table(["chain", "measured", "bound", "C", "compliant"], [(s.chain, s.measured, s.value(C), C, s.measured <= s.value(C)) for s in samples])
    out.summary.update(oracle_error=rows[0][2], gradient_gap=max(r[3] for r in rows), nl_du_ok=all(r[6] for r in rows))
    return out


# -- bound-ledger-report ------------------------------------------------------------------------------------------------


def ledger_inputs(p: dict) -> BoundInputs:
    return BoundInputs(T=p["T"], nu=p["nu"], gamma=p["gamma"], beta=p["beta"], **p["norms"])


DEFAULT_ENVELOPES = Envelopes(M_A=lambda x: x, M_P=lambda x: x * x, M_DP=lambda x: 2 * x)


def monotonicity_violations(chain: str, base: BoundInputs, rng, draws: int, envelopes: Envelopes = DEFAULT_ENVELOPES) -> int:
    """Raise one random input norm by 10% and count decreases of the chain."""
    from dataclasses import replace

    names = BoundInputs.norm_names()
    bad = 0
    for _ in range(draws):
        vals = {n: float(rng.uniform(0.0, 2.0)) for n in names}
        inp = replace(base, **vals)
        name = names[int(rng.integers(len(names)))]
        up = replace(inp, **{name: vals[name] * 1.1})
        v0 = evaluate_chain(chain, inp, envelopes)
        v1 = evaluate_chain(chain, up, envelopes)
        if v1 < v0 and not (math.isinf(v0) and math.isinf(v1)):
            bad += 1
    return bad


def exp_bound_ledger_report(p: dict, rng, dials, calibrate_mode) -> Outcome:
    out = Outcome()
    ledger = BoundLedger()
    inp = ledger_inputs(p)
    for chain in CHAINS:
        evaluate_chain(chain, inp, DEFAULT_ENVELOPES, ledger)
    out.tables["ledger"] = Table(["chain", "inputs_hash", "value"], [(e.chain, e.inputs_hash, e.value) for _, e in sorted(ledger.entries.items())])
    mono = [(chain, p["draws"], monotonicity_violations(chain, inp, rng, p["draws"])) for chain in CHAINS]
    out.tables["monotonicity"] = Table(["chain", "draws", "violations"], mono)
    probe = taupe_falsification(p["taupe_draws"], seed=int(rng.integers(2**32)))
    out.tables["taupe_falsification"] = Table(["draws", "counterexamples", "worst_ratio"], [(probe.draws, probe.counterexamples, probe.worst_ratio)])
    out.summary.update(chains=len(CHAINS), monotone=all(m[2] == 0 for m in mono), taupe_counterexamples=probe.counterexamples)
    out.extra_text = {"ledger.json": ledger.to_json()}  # type: ignore[attr-defined]
    return out


RUNNERS = {
    "heat-kernel-scaling": exp_heat_kernel_scaling,
    "linear-bounds": exp_linear_bounds,
    "fk-vs-spectral": exp_fk_vs_spectral,
    "burgers-colehopf": exp_burgers_colehopf,
    "quasi-operator-suite": exp_quasi_operator_suite,
    "semi-ns-energy": exp_semi_ns_energy,
    "semi-ns-decay": exp_semi_ns_decay,
    "kpz-demo": exp_kpz_demo,
    "bound-ledger-report": exp_bound_ledger_report,
}


# -- calibration families ----------------------------------------------------------------------------------------------------


def _family_linear(p, rng):
    return linear_family_samples(p, rng)[0]


def _family_unif(p, rng):
    """Heat flow (``b = c = f = 0``) against the uniform chain, which is attained at ``t = 0``."""
    out = []
    for _ in range(p["trials"]):
        co, _ = linear_trial(p, rng)
        heat = CoefficientSet(co.schedule, co.g, co.times)
        u = solve_linear(heat, substeps=p["substeps"])
        out.append(CalibrationSample("unif", linear_inputs(heat, p["gamma"]), float(np.max(np.abs(u.values)))))
    return out


def _family_decay(p, rng):
    return decay_family_samples(p)[0]


def _family_nonlinear(p, rng):
    co = kpz_problem(p)
    out = []
    for kappa in (0.0, p["kappa"]):
        u, _ = nonlinear_solve(kpz(), None if kappa == 0 else kappa, co, tol=p["tol"], max_iter=p["max_iter"])
        out.append(CalibrationSample("nl_d2", kpz_inputs(co, kappa), sup_hess(co.grid, u.values), KPZ_ENVELOPES))
    return out


def _family_transport(p, rng):
    return [transport_samples(p, n)[0] for n in p["transport_n"]]


FAMILIES = {
    "unif": ("linear-bounds", _family_unif),
    "linear": ("linear-bounds", _family_linear),
    "transport": ("linear-bounds", _family_transport),
    "semi-ns-decay": ("semi-ns-decay", _family_decay),
    "nonlinear": ("kpz-demo", _family_nonlinear),
}


def calibrate_dials(family: str, params: dict | None = None, seed: int = 0, scale: float = 1.0) -> CalibrationResult:
    """Run the registered calibration run of ``family`` and fit its dial.

    ``scale`` multiplies every chain value; ``scale < 1`` turns the run into a
    negative control.
    """
    from paralab.config import load_config

    if family not in FAMILIES:
        raise KeyError(f"no calibration run registered for family {family!r}")
    exp_id, collect = FAMILIES[family]
    p = params if params is not None else load_config(None)["experiments"][exp_id]
    samples = collect(p, experiment_rng(seed, exp_id))
    if scale != 1.0:
        samples = [CalibrationSample(s.chain, s.inputs, s.measured, s.envelopes, scale) for s in samples]
    return calibrate(family, samples)


def calibrate_samples(family: str, samples, scale: float = 1.0) -> CalibrationResult:
    samples = [CalibrationSample(s.chain, s.inputs, s.measured, s.envelopes, scale * s.scale) for s in samples]
    return calibrate(family, samples)


# -- persistence -----------------------------------------------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return str(v)


def write_csv(path: Path, table: Table) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    experiment: str
    spec: dict
    version: str
    wall_clock: float
    outputs: dict[str, str]
    summary: dict
    calibrations: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "experiment": self.experiment,
                "spec": self.spec,
                "version": self.version,
                "wall_clock_seconds": self.wall_clock,
                "outputs": self.outputs,
                "summary": {k: _jsonable(v) for k, v in self.summary.items()},
                "calibrations": self.calibrations,
            },
            indent=2,
            sort_keys=True,
        )


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else repr(float(v))
    if isinstance(v, (np.integer, int)):
        return int(v)
    return v


def _write_plots(outcome: Outcome, outdir: Path) -> list[Path]:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    matplotlib.rcParams["svg.hashsalt"] = "paralab"
    paths = []
    for plot in outcome.plots:
        fig, name = plot(lambda: plt.subplots(figsize=(6, 4)))
        path = outdir / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def _persist_failure(outdir: Path, exc: Exception) -> None:
    """Keep what is known about a failed run: the message and, for Picard failures, the trace."""
    (outdir / "failure.txt").write_text(f"{type(exc).__name__}: {exc}\n")
    if isinstance(exc, ConvergenceFailure):
        write_csv(outdir / "failure_trace.csv", Table(["iteration", "residual", "u_inf", "bounds_ok"], exc.trace.rows()))


def run(exp_id: str, params: dict, outdir: str | Path, seed: int = 0, dials: dict | None = None, calibrate_mode: bool = False, plots: bool = False) -> RunManifest:
    """Execute one experiment and persist its outputs and manifest."""
    if exp_id not in RUNNERS:
        raise ValueError(f"unknown experiment id {exp_id!r}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        outcome = RUNNERS[exp_id](params, experiment_rng(seed, exp_id), dict(dials or {}), calibrate_mode)
    except Exception as exc:
        _persist_failure(outdir, exc)
        raise
    files = [write_csv(outdir / f"{name}.csv", table) for name, table in outcome.tables.items()]
    if outcome.calibrations:
        cal = Table(["family", "C", "compliant", "ceiling"], [(r.family, r.C, r.compliant, r.ceiling) for r in outcome.calibrations.values()])
        files.append(write_csv(outdir / "calibration.csv", cal))
    for name, text in getattr(outcome, "extra_text", {}).items():
        path = outdir / name
        path.write_text(text)
        files.append(path)
    if plots:
        files += _write_plots(outcome, outdir)
    manifest = RunManifest(
        exp_id,
        {"params": params, "seed": seed},
        __version__,
        time.perf_counter() - start,
        {p.name: sha256(p) for p in sorted(files)},
        outcome.summary,
        {k: v.to_dict() for k, v in outcome.calibrations.items()},
    )
    (outdir / "manifest.json").write_text(manifest.to_json())
    return manifest
