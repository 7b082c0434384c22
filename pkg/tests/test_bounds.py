import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from paralab.bounds import (
    CHAINS,
    KPZ_ENVELOPES,
    Q_GRID,
    BoundInputs,
    BoundLedger,
    Envelopes,
    MissingInput,
    evaluate_chain,
    gronwall_bound,
    required_inputs,
    taupe_bound,
)

SPEC_CHAINS = [
    "unif", "grad_linear", "hess_linear", "hess_holder_linear", "dt_unif_linear", "dt_holder_linear",
    "grad_quasi", "holder_quasi", "d2_quasi", "d2_holder_quasi", "dt_quasi", "dt_holder_quasi",
    "ns_energy", "ns_du_inf", "ns_du_beta", "ns_u_beta", "ns_d2_inf", "ns_d2_beta", "ns_d2_holder",
    "ns_dt_beta", "ns_dt_holder", "nl_du", "nl_u", "nl_d2",
]  # fmt: skip

ENV = Envelopes(M_A=lambda x: x * x, M_P=lambda x: x * x, M_DP=lambda x: 2 * x)
NAMES = BoundInputs.norm_names()


def full_inputs(**kw):
    base = dict(T=1.0, nu=0.5, gamma=0.5, beta=3.0)
    base.update({n: 1.0 for n in NAMES})
    base.update(kw)
    return BoundInputs(**base)


# -- lemmas -----------------------------------------------------------------------


def test_taupe_examples():
    assert taupe_bound(0, 5, 0.5) == 10
    assert taupe_bound(1, 0, 0.5) == 4
    assert taupe_bound(2, 3, 0.5) == 22
    root = brentq(lambda x: 2 * math.sqrt(x) + 3 - x, 1, 100)
    assert root == pytest.approx(9, abs=1e-10) and root <= 22


@pytest.mark.parametrize("eta", [0.0, 1.0, -0.2, 1.5])
def test_taupe_rejects_eta(eta):
    with pytest.raises(ValueError):
        taupe_bound(1, 1, eta)


def test_taupe_falsification_ten_thousand_draws():
    rng = np.random.default_rng(20240601)
    found = 0
    checked = 0
    while checked < 10_000:
        a, b = rng.uniform(0, 10, 2) * rng.choice([0.0, 1.0], 2, p=[0.1, 0.9])
        eta = rng.uniform(0.01, 0.99)
        bound = taupe_bound(a, b, eta)
        # propose x up to 1.5x the bound, keep those satisfying the hypothesis
        x = rng.uniform(0, 1.5 * bound + 1e-9, 64)
        ok = x <= a * x**eta + b
        checked += int(ok.sum())
        found += int(np.sum(x[ok] > bound))
    assert found == 0


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.02, 0.98))
def test_taupe_bounds_largest_root(a, b, eta):
    bound = taupe_bound(a, b, eta)
    h = lambda x: a * x**eta + b - x  # noqa: E731
    # h is concave and positive near 0 (when a or b > 0); its largest root is the sharp bound
    if h(bound) > 0:
        pytest.fail("hypothesis region extends past the bound")


def test_gronwall_examples():
    assert gronwall_bound(3.0, lambda s: 0.0, t=2.0) == 3.0
    assert gronwall_bound(1.0, lambda s: 1.0, t=1.0) == pytest.approx(math.e, rel=1e-14)
    assert gronwall_bound(2.0, lambda s: s, t=2.0) == pytest.approx(2 * math.e**2, abs=1e-9)
    ts = np.linspace(0, 2, 11)
    assert gronwall_bound(2.0, ts, times=ts) == pytest.approx(2 * math.e**2, abs=1e-9)
    with pytest.raises(ValueError):
        gronwall_bound(1.0, [-1.0, 0.0], times=[0.0, 1.0])


# -- chains -----------------------------------------------------------------------


def test_every_listed_chain_is_registered():
    assert set(SPEC_CHAINS) <= set(CHAINS)


def test_unif_examples():
    assert evaluate_chain("unif", BoundInputs(T=2, f_inf=1, g_inf=3, c_inf=0)) == 5
    assert evaluate_chain("unif", BoundInputs(T=2, f_inf=1, g_inf=3, c_inf=0.5)) == pytest.approx(5 * math.e, rel=1e-15)


def test_grad_linear_example():
    inp = BoundInputs(T=1, nu=1, f_inf=1, dg_inf=0, b_inf=0, c_inf=0, g_inf=0, C=1)
    assert evaluate_chain("grad_linear", inp) == 1


def test_ns_energy_example():
    inp = BoundInputs(g_l2=1.7, f_l2=0.0)
    assert evaluate_chain("ns_energy", inp) == pytest.approx(math.sqrt(2) * 1.7**2, rel=1e-15)


def test_missing_and_unknown():
    with pytest.raises(MissingInput):
        evaluate_chain("unif", BoundInputs(T=1, g_inf=1))
    with pytest.raises(KeyError):
        evaluate_chain("no_such_chain", full_inputs())
    with pytest.raises(MissingInput):
        evaluate_chain("grad_quasi", full_inputs())


def test_input_invariants():
    with pytest.raises(ValueError):
        BoundInputs(g_inf=-1)
    with pytest.raises(ValueError):
        BoundInputs(gamma=1.0)
    with pytest.raises(ValueError):
        BoundInputs(nu=0.0)
    with pytest.raises(ValueError):
        BoundInputs(C=0.5)


def test_q_grid():
    assert Q_GRID[0] == 1.05 and Q_GRID[-1] == 1.45 and len(Q_GRID) == 9


def test_required_inputs():
    assert required_inputs("unif") == ["T", "c_inf", "f_inf", "g_inf"]
    assert "b_inf" in required_inputs("grad_linear")


@pytest.mark.parametrize("chain", sorted(CHAINS))
def test_reevaluation_is_bit_identical(chain):
    ledger = BoundLedger()
    inp = full_inputs()
    v1 = evaluate_chain(chain, inp, ENV, ledger)
    v2 = evaluate_chain(chain, replace(inp), ENV)
    assert v1 == v2 or (math.isnan(v1) and math.isnan(v2))
    assert ledger[chain] == v1
    assert chain in ledger.to_csv() and chain in ledger.to_json()


@pytest.mark.parametrize("chain", sorted(CHAINS))
def test_chain_monotone_in_every_norm(chain):
    rng = np.random.default_rng(abs(hash(chain)) % 2**32)
    for _ in range(1000):
        vals = {n: float(rng.uniform(0, 2)) for n in NAMES}
        inp = full_inputs(**vals)
        name = NAMES[int(rng.integers(len(NAMES)))]
        up = replace(inp, **{name: vals[name] * 1.1})
        v0 = evaluate_chain(chain, inp, ENV)
        v1 = evaluate_chain(chain, up, ENV)
        assert v1 >= v0 or (math.isinf(v0) and math.isinf(v1)), (chain, name)


def degenerate(**g):
    zero = {n: 0.0 for n in NAMES if not n.startswith(("g_", "dg_", "d2g_"))}
    vals = dict(g_inf=1.3, g_beta=2.0, g_l2=0.9, dg_inf=0.7, dg_beta=1.1, d2g_inf=0.4, d2g_beta=0.8, d2g_holder=0.6)
    vals.update(g)
    return BoundInputs(T=0.8, nu=0.3, gamma=0.4, beta=3.0, **zero, **vals)


def test_degenerate_reductions():
    v = degenerate()
    zero_drift = Envelopes(M_A=lambda x: 0.0, M_P=lambda x: 0.0, M_DP=lambda x: 0.0)
    expect = {
        "unif": v.g_inf,
        "grad_linear": v.dg_inf,
        "hess_linear": 2 * v.d2g_inf,
        "hess_holder_linear": v.d2g_holder,
        "dt_unif_linear": v.d2g_inf,
        "dt_holder_linear": v.d2g_holder,
        "grad_quasi": v.dg_inf,
        "d2_quasi": 2 * v.d2g_inf,
        "d2_holder_quasi": v.d2g_holder,
        "dt_quasi": v.d2g_inf,
        "dt_holder_quasi": v.d2g_holder,
        "ns_energy": math.sqrt(2) * v.g_l2**2,
        "ns_unif": v.g_inf,
        "nl_du": v.dg_inf,
        "nl_u": v.g_inf,
        "nl_d2": v.d2g_inf,
    }
    for chain, val in expect.items():
        assert evaluate_chain(chain, v, zero_drift) == pytest.approx(val, rel=1e-14, abs=0), chain


@pytest.mark.parametrize("chain", [c for c in sorted(CHAINS) if c.startswith("ns_")])
def test_ns_chains_depend_on_g_only_when_f_vanishes(chain):
    # with f = b = c = 0 the semi Navier-Stokes chains see only g norms
    v = degenerate()
    noisy = replace(v, b_inf=5.0, b_holder=5.0, c_inf=5.0, c_holder=5.0)
    assert evaluate_chain(chain, v) == evaluate_chain(chain, noisy)


def test_ns_bounds_are_nu_independent():
    v = full_inputs()
    for chain in ("ns_energy", "ns_unif"):
        assert evaluate_chain(chain, v) == evaluate_chain(chain, replace(v, nu=v.nu / 2))


def test_kpz_envelopes():
    assert KPZ_ENVELOPES.M_P(3.0) == 9.0 and KPZ_ENVELOPES.M_DP(3.0) == 6.0


def test_overflow_is_a_vacuous_bound():
    v = full_inputs(b_inf=2.0, T=1e4)
    assert evaluate_chain("grad_linear", v) == math.inf


def test_taupe_falsification_probe(monkeypatch):
    from paralab import bounds

    probe = bounds.taupe_falsification(2000, seed=3)
    assert probe.counterexamples == 0 and probe.draws == 2000
    assert 0.5 < probe.worst_ratio <= 1.0
    original = bounds.taupe_bound
    monkeypatch.setattr(bounds, "taupe_bound", lambda a, b, eta: 0.5 * original(a, b, eta))
    assert bounds.taupe_falsification(200, seed=3).counterexamples > 0
