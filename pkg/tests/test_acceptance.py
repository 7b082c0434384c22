"""Acceptance criteria: one PASS/FAIL line per criterion.

Run with pytest (lines are printed in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from paralab.config import load_config
from paralab.experiments import EXPERIMENT_IDS, run
from paralab.field import Field, gradient_values, make_grid
from paralab.heat import DiffusionSchedule
from paralab.leray import divergence, project_snapshot, random_trig_field
from paralab.solvers import CoefficientSet, solve_linear

RESULTS: list[str] = []


class Runs:
    """Every experiment at the shipped defaults, run twice with the same seed."""

    def __init__(self, root: Path):
        cfg = load_config(None)
        self.first, self.second = {}, {}
        for exp in EXPERIMENT_IDS:
            self.first[exp] = run(exp, cfg["experiments"][exp], root / "a" / exp, cfg["seed"])
            self.second[exp] = run(exp, cfg["experiments"][exp], root / "b" / exp, cfg["seed"])
        self.root = root

    def summary(self, exp):
        return self.first[exp].summary

    def seconds(self, exp):
        return self.first[exp].wall_clock


def check_heat_exactness(_runs):
    nu, T, n = 0.5, 1.0, 64
    grid = make_grid(1, n, math.pi)
    g = Field.from_function(grid, lambda t, x: np.cos(x[0]))
    t0 = time.perf_counter()
    times = np.linspace(0, T, 201)
    u = solve_linear(CoefficientSet(DiffusionSchedule.isotropic(1, nu), g, times))
    secs = time.perf_counter() - t0
    exact = np.exp(-nu * times)[:, None] * np.cos(grid.nodes)
    rel = float(np.max(np.abs(u.values[:, 0] - exact)) / np.max(np.abs(exact)))
    return rel <= 1e-6 and secs < 1.0, f"relative error {rel:.2e}, {secs:.3f} s"


def check_scalings(runs):
    s, secs = runs.summary("heat-kernel-scaling"), runs.seconds("heat-kernel-scaling")
    return s["all_slopes_within_tol"] and secs < 30, f"slopes within 0.1: {s['all_slopes_within_tol']}, {secs:.1f} s"


def check_feynman_kac(runs):
    s, secs = runs.summary("fk-vs-spectral"), runs.seconds("fk-vs-spectral")
    p = load_config(None)["experiments"]["fk-vs-spectral"]
    ok = s["all_agree"] and secs < 60 and p["probes"] == 20 and p["n_paths"] >= 1e5
    return ok, f"{p['probes']} probes agree: {s['all_agree']}, {secs:.1f} s"


def check_linear_unif(runs):
    s = runs.summary("linear-bounds")
    return s["unif_all_ok"], f"10 trials within 1% and bound drift-invariant: {s['unif_all_ok']}"


def check_taupe(runs):
    s = runs.summary("bound-ledger-report")
    return s["taupe_counterexamples"] == 0, f"{s['taupe_counterexamples']} counterexamples in 10^4 draws"


def check_burgers(runs):
    s, secs = runs.summary("burgers-colehopf"), runs.seconds("burgers-colehopf")
    ok = s["max_error_finest"] <= 1e-3 and s["uniqueness_gap"] <= 1e-8 and secs < 60
    return ok, f"error {s['max_error_finest']:.2e} at n=256, uniqueness gap {s['uniqueness_gap']:.1e}, {secs:.1f} s"


def check_quasi_suite(runs):
    s = runs.summary("quasi-operator-suite")
    return s["all_envelopes_ok"], f"envelopes on 100 fields x 4 kinds: {s['all_envelopes_ok']}"


def check_leray(_runs):
    t0 = time.perf_counter()
    grid = make_grid(3, 32, math.pi)
    rng = np.random.default_rng(0)
    v, w = random_trig_field(grid, rng, 4), random_trig_field(grid, rng, 4)
    Pv, Pw = project_snapshot(grid, v), project_snapshot(grid, w)
    grad = gradient_values(grid, random_trig_field(grid, rng, 4, r=1))[0]
    scale = float(np.max(np.abs(v)))
    X = grid.mesh
    free = np.stack([np.sin(X[1]) + np.cos(2 * X[2]), np.sin(X[2]), np.sin(X[0] + X[1])])
    errs = {
        "idempotence": float(np.max(np.abs(project_snapshot(grid, Pv) - Pv))) / scale,
        "self_adjoint": abs(float(np.sum(Pv * w) - np.sum(v * Pw))) / float(np.sum(np.abs(v * w))),
        "gradient_kill": float(np.max(np.abs(project_snapshot(grid, grad)))) / float(np.max(np.abs(grad))),
        "fixed_set": float(np.max(np.abs(project_snapshot(grid, free) - free))),
        "divergence": float(np.max(np.abs(divergence(grid, Pv)))) / scale,
    }
    secs = time.perf_counter() - t0
    worst = max(errs.values())
    return worst <= 1e-10 and secs < 10, f"worst relative defect {worst:.1e}, {secs:.1f} s"


def check_semi_ns_energy(runs):
    s, secs = runs.summary("semi-ns-energy"), runs.seconds("semi-ns-energy")
    ok = s["relative_residual"] <= 1e-3 and s["energy_ok"] and s["linf_ok"] and secs < 300
    return ok, f"residual {s['relative_residual']:.1e}, energy {s['energy_ok']}, sup {s['linf_ok']}, {secs:.0f} s"


def check_semi_ns_decay(runs):
    s = runs.summary("semi-ns-decay")
    return s["all_finite"] and s["all_compliant"], f"finite {s['all_finite']}, compliant {s['all_compliant']} (C={s['decay_C']})"


def check_kpz(runs):
    s = runs.summary("kpz-demo")
    ok = s["oracle_error"] <= 1e-3 and s["gradient_gap"] <= 1e-2
    return ok, f"oracle error {s['oracle_error']:.1e}, gradient gap {s['gradient_gap']:.1e}"


def check_determinism(runs):
    diffs = []
    for exp in EXPERIMENT_IDS:
        a = sorted((runs.root / "a" / exp).glob("*.csv"))
        b = sorted((runs.root / "b" / exp).glob("*.csv"))
        if [p.name for p in a] != [p.name for p in b] or any(x.read_bytes() != y.read_bytes() for x, y in zip(a, b)):
            diffs.append(exp)
        if runs.first[exp].outputs != runs.second[exp].outputs:
            diffs.append(exp + " (manifest)")
    return not diffs, "all CSVs byte-identical" if not diffs else "differs: " + ", ".join(diffs)


CRITERIA = [
    ("heat-propagator exactness", check_heat_exactness),
    ("kernel scalings", check_scalings),
    ("Feynman-Kac agreement", check_feynman_kac),
    ("linear uniform bound", check_linear_unif),
    ("circular-argument lemma", check_taupe),
    ("Burgers oracle", check_burgers),
    ("quasi-linear operator suite", check_quasi_suite),
    ("Leray projector", check_leray),
    ("semi-NS energy identity", check_semi_ns_energy),
    ("semi-NS beta-decay", check_semi_ns_decay),
    ("KPZ oracle", check_kpz),
    ("determinism", check_determinism),
]


def _record(name, fn, runs):
    ok, detail = fn(runs)
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


@pytest.mark.slow
@pytest.mark.parametrize("name,fn", CRITERIA, ids=[c[0].replace(" ", "-") for c in CRITERIA])
def test_criterion(name, fn, runs):
    assert _record(name, fn, runs)


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        r = Runs(Path(tmp))
        sys.exit(0 if all([_record(n, f, r) for n, f in CRITERIA]) else 1)
