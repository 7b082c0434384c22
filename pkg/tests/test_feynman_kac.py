import math

import numpy as np
import pytest

from paralab.feynman_kac import (
    SdeSpec,
    UnsupportedConfiguration,
    cholesky_of_diffusion,
    default_steps,
    fk_estimate,
    fk_solve_point,
    sample_field,
    simulate_paths,
)
from paralab.field import Field, make_grid
from paralab.heat import DiffusionSchedule, green_apply
from paralab.solvers import CoefficientSet, solve_linear


def test_cholesky_examples():
    s = DiffusionSchedule.isotropic(3, 0.4)
    assert np.allclose(cholesky_of_diffusion(s, 0.0), math.sqrt(0.8) * np.eye(3), atol=1e-15)
    sig = cholesky_of_diffusion(DiffusionSchedule.from_matrix(np.diag([1.0, 4.0])), 0.0)
    assert np.allclose(sig, np.diag([math.sqrt(2), math.sqrt(8)]), atol=1e-15)
    bad = DiffusionSchedule(lambda t: np.array([[1.0, 0.2], [0.0, 1.0]]), 0.5, 2.0, 2)
    with pytest.raises(ValueError):
        cholesky_of_diffusion(bad, 0.0)
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    sig = cholesky_of_diffusion(DiffusionSchedule.from_matrix(A), 0.0)
    assert np.allclose(sig @ sig.T, 2 * A, atol=1e-14)
    assert sig[0, 1] == 0 and np.all(np.diag(sig) > 0)


def test_brownian_terminal_variance():
    spec = SdeSpec(DiffusionSchedule.isotropic(1, 1.0), 1.0)
    ens = simulate_paths(spec, [0.3], 0.2, 100_000, 10, seed=5)
    X = ens.terminal[0, :, 0] - 0.3
    var = X.var(ddof=1)
    # standard error of the sample variance of a Gaussian
    se = 2 * 0.8 * math.sqrt(2 / (X.size - 1))
    assert abs(var - 2 * 0.8) <= 3 * se


def test_single_step_constant_drift_mean():
    b = 0.7
    spec = SdeSpec(DiffusionSchedule.isotropic(1, 0.5), 1.0, drift=b)
    ens = simulate_paths(spec, [0.0], 0.4, 100_000, 1, seed=9)
    X = ens.terminal[0, :, 0]
    se = X.std(ddof=1) / math.sqrt(X.size)
    assert abs(X.mean() + b * 0.6) <= 3 * se


def test_fixed_seed_reproduces_bits():
    spec = SdeSpec(DiffusionSchedule.isotropic(2, 0.5), 1.0, r=2, drift=lambda t, X: np.sin(X).repeat(2, axis=1))
    a = simulate_paths(spec, [0.1, 0.2], 0.0, 500, 7, seed=3)
    b = simulate_paths(spec, [0.1, 0.2], 0.0, 500, 7, seed=3)
    c = simulate_paths(spec, [0.1, 0.2], 0.0, 500, 7, seed=4)
    assert np.array_equal(a.paths, b.paths)
    assert not np.array_equal(a.paths, c.paths)
    # component streams are independent
    assert not np.array_equal(a.paths[0], a.paths[1])


def test_simulate_preconditions():
    spec = SdeSpec(DiffusionSchedule.isotropic(1, 1.0), 1.0)
    with pytest.raises(ValueError):
        simulate_paths(spec, [0.0], 0.0, 10, 0, 1)
    with pytest.raises(ValueError):
        simulate_paths(spec, [0.0], 1.5, 10, 1, 1)


def test_constant_terminal_value():
    spec = SdeSpec(DiffusionSchedule.isotropic(1, 1.0), 1.0)
    est = fk_estimate(simulate_paths(spec, [0.0], 0.0, 1000, 5, 1), 1.0)
    assert est.value[0] == 1.0 and est.stderr[0] == 0.0


def test_heat_closed_form():
    nu, T, t, x = 0.5, 1.0, 0.25, 0.4
    spec = SdeSpec(DiffusionSchedule.isotropic(1, nu), T)
    est = fk_estimate(simulate_paths(spec, [x], t, 100_000, 20, 11), lambda s, X: np.cos(X[:, :1]))
    ref = math.exp(-nu * (T - t)) * math.cos(x)
    assert abs(est.value[0] - ref) <= 3 * est.stderr[0]


def test_constant_forcing_sign_matches_green():
    g = make_grid(1, 32, math.pi)
    sched = DiffusionSchedule.isotropic(1, 1.0)
    spec = SdeSpec(sched, 1.0)
    est = fk_solve_point(spec, 0.0, 1.0, [0.0], 0.6, 1000, 10, 2)
    G = green_apply(Field.constant_in_time(g, np.ones((1, 32)), [0.0, 1.0]), sched, 0.6)
    assert est.value[0] == pytest.approx(0.6, abs=1e-12)
    assert est.value[0] == pytest.approx(float(G.values[-1, 0, 0]), abs=1e-6)


def test_c_nonzero_is_refused():
    spec = SdeSpec(DiffusionSchedule.isotropic(1, 1.0), 1.0)
    ens = simulate_paths(spec, [0.0], 0.0, 10, 2, 1)
    with pytest.raises(UnsupportedConfiguration):
        fk_estimate(ens, 1.0, c=0.3)
    fk_estimate(ens, 1.0, c=0.0)


def test_sample_field_interpolates_linear_data():
    g = make_grid(2, 16, 1.0)
    f = Field.from_function(g, lambda t, x: 2 + 0 * x[0], [0.0, 1.0])
    X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert np.allclose(sample_field(f, 0.3, X, 1), 2.0)
    assert sample_field(None, 0.0, X, 3).shape == (20, 3)


def test_default_steps():
    spec = SdeSpec(DiffusionSchedule.isotropic(1, 1.0), 1.0)
    assert default_steps(spec, 0.0, 0.1) == 10
    assert (1.0 - 0.0) / default_steps(spec, 0.0, 0.3) <= 0.3


def test_fk_vs_spectral_with_drift_and_source():
    g = make_grid(1, 64, math.pi)
    nu, T = 0.5, 1.0
    times = np.linspace(0, T, 11)
    gv = Field.from_function(g, lambda t, x: np.cos(x[0]) + 0.3 * np.sin(2 * x[0]))
    fv = Field.from_function(g, lambda t, x: 0.5 * np.sin(x[0]))
    bv = Field.from_function(g, lambda t, x: 0.4 * np.cos(x[0]))
    sched = DiffusionSchedule.isotropic(1, nu)
    u = solve_linear(CoefficientSet(sched, gv, times, b=bv, f=fv), substeps=20)
    spec = SdeSpec(sched, T, 1, bv)
    for j, ti in [(5, 10), (20, 4), (40, 7)]:
        tau = float(times[ti])
        est = fk_solve_point(spec, gv, fv, [g.nodes[j]], tau, 40_000, 50, 100 + j)
        slack = 2 * g.h**2 + 2 * tau / 50
        assert abs(est.value[0] - u.values[ti, 0, j]) <= 3 * (est.stderr[0] + slack)
