"""Closed-form a-priori bound chains and the two elementary lemmas they use.

Every chain is a plain function of input norms.  The generic constants of the
estimates are collapsed into one dial ``C`` (and ``Cp`` for the
Calderón-Zygmund constant of the Leray projector); both default to 1 and are
meant to be calibrated once per experiment family.

Chain identifiers follow the families of estimates:

* linear: ``unif``, ``grad_linear``, ``holder_linear``, ``hess_linear``,
  ``hess_holder_linear``, ``dt_unif_linear``, ``dt_holder_linear``
* quasi-linear: ``grad_quasi``, ``holder_quasi``, ``d2_quasi``,
  ``d2_holder_quasi``, ``dt_quasi``, ``dt_holder_quasi``
* semi Navier-Stokes: ``ns_energy``, ``ns_unif``, ``ns_du_inf``,
  ``ns_du_beta``, ``ns_u_beta``, ``ns_d2_inf``, ``ns_d2_beta``,
  ``ns_d2_holder``, ``ns_dt_beta``, ``ns_dt_holder``
* first-order non-linear: ``nl_du``, ``nl_u``, ``nl_d2``
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import threading
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Sequence

import numpy as np


class MissingInput(KeyError):
    """A chain needs a norm that was not supplied."""


# -- lemmas -------------------------------------------------------------------


def taupe_bound(a: float, b: float, eta: float) -> float:
    """Closed bound for ``x <= a x^eta + b``: ``x <= 2b + 2^{1/(1-eta)} a^{1/(1-eta)}``."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if a < 0 or b < 0:
        raise ValueError("a and b must be non-negative")
    k = 1.0 / (1.0 - eta)
    try:
        return 2.0 * b + (2.0 * a) ** k
    except OverflowError:
        return math.inf


@dataclass
class TaupeProbe:
    draws: int
    counterexamples: int
    worst_ratio: float


def taupe_falsification(draws: int = 10_000, seed: int = 0, samples_per_draw: int = 64) -> TaupeProbe:
    """Randomized search for ``x <= a x^eta + b`` with ``x`` above ``taupe_bound``.

    ``h(x) = a x^eta + b - x`` is concave with ``h(0) >= 0``, so the admissible
    set is ``[0, x*]`` and a counterexample exists iff ``h(bound) > 0``; that
    exact test is combined with random admissible ``x`` per draw.
    ``worst_ratio`` is the largest admissible ``x / bound`` seen.
    """
    rng = np.random.default_rng(seed)
    bad, worst = 0, 0.0
    for _ in range(draws):
        a, b = rng.uniform(0, 10, 2) * (rng.random(2) < 0.9)
        eta = rng.uniform(0.01, 0.99)
        bound = taupe_bound(a, b, eta)
        if not math.isfinite(bound) or bound == 0.0:
            continue
        x = np.append(rng.uniform(0, 1.5 * bound, samples_per_draw), bound)
        ok = x <= a * x**eta + b
        worst = max(worst, float(np.max(x[ok])) / bound) if ok.any() else worst
        if np.any(x[ok] > bound) or a * bound**eta + b - bound > 1e-12 * bound:
            bad += 1
    return TaupeProbe(draws, bad, worst)


def gronwall_bound(base: float, rate, t: float | None = None, times: Sequence[float] | None = None, n: int = 2001) -> float:
    """``base * exp(int_0^t rate)``.

    ``rate`` is either a callable sampled on ``n`` uniform points of
    ``[0, t]`` or an array of samples at ``times``; the integral is a
    trapezoid rule.
    """
    if base < 0:
        raise ValueError("base must be non-negative")
    if callable(rate):
        if t is None:
            raise ValueError("t is required when rate is a callable")
        times = np.linspace(0.0, t, n)
        samples = np.array([rate(s) for s in times], dtype=float)
    else:
        samples = np.asarray(rate, dtype=float)
        if times is None:
            raise ValueError("times are required for sampled rates")
        times = np.asarray(times, dtype=float)
    if np.any(samples < 0):
        raise ValueError("rate samples must be non-negative")
    return float(base * math.exp(np.trapezoid(samples, times)))


# -- inputs -------------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    """Norms feeding the chains; ``None`` marks an input that was not measured.

    Naming: ``x_inf`` sup norm, ``x_holder`` the ``L^inf(C^gamma)`` Hölder
    modulus, ``x_beta`` the beta-weighted norm, ``dx``/``d2x`` first and second
    spatial derivatives, ``x_l2`` the ``L^2`` (for ``f`` the ``L^2 L^2``) norm.
    """

    T: float | None = None
    nu: float | None = None
    gamma: float | None = None
    beta: float | None = None
    f_inf: float | None = None
    f_holder: float | None = None
    f_beta: float | None = None
    df_inf: float | None = None
    df_beta: float | None = None
    f_l2: float | None = None
    g_inf: float | None = None
    g_beta: float | None = None
    g_l2: float | None = None
    dg_inf: float | None = None
    dg_beta: float | None = None
    d2g_inf: float | None = None
    d2g_beta: float | None = None
    d2g_holder: float | None = None
    b_inf: float | None = None
    b_holder: float | None = None
    c_inf: float | None = None
    c_holder: float | None = None
    C: float = 1.0
    Cp: float = 1.0

    def __post_init__(self):
        for fld in fields(self):
            v = getattr(self, fld.name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{fld.name} must be a finite non-negative number, got {v}")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.nu is not None and self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.C < 1:
            raise ValueError("the generic constant C must be >= 1")

    @classmethod
    def norm_names(cls) -> list[str]:
        """Inputs the chains are nondecreasing in (everything but T, nu, gamma, beta, dials)."""
        return [f.name for f in fields(cls) if f.name not in ("T", "nu", "gamma", "beta", "C", "Cp")]

    def with_dials(self, C: float | None = None, Cp: float | None = None) -> "BoundInputs":
        return replace(self, C=self.C if C is None else C, Cp=self.Cp if Cp is None else Cp)

    def snapshot(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class Envelopes:
    """Caller-supplied monotone envelope functions of the operator assumptions."""

    M_A: Callable[[float], float] | None = None
    M_P: Callable[[float], float] | None = None
    M_DP: Callable[[float], float] | None = None


KPZ_ENVELOPES = Envelopes(M_P=lambda x: x * x, M_DP=lambda x: 2.0 * x)
Q_GRID = tuple(round(1.05 + 0.05 * k, 2) for k in range(9))


def _exp(x: float) -> float:
    # an overflowing bound is still a (vacuous) bound
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


class _Reader:
    def __init__(self, inputs: BoundInputs, env: Envelopes | None):
        self._inputs = inputs
        self._env = env or Envelopes()

    def __getattr__(self, name):
        if name.startswith("M_"):
            fn = getattr(self._env, name)
            if fn is None:
                raise MissingInput(f"envelope {name} is required for this chain")
            return fn
        v = getattr(self._inputs, name)
        if v is None:
            raise MissingInput(f"input {name!r} is required for this chain")
        return float(v)


# -- linear family -----------------------------------------------------------


def _unif(v) -> float:
    return (v.g_inf + v.T * v.f_inf) * _exp(v.T * v.c_inf)


def _grad_linear(v, b_inf=None) -> float:
    b = v.b_inf if b_inf is None else b_inf
    T, nu, C = v.T, v.nu, v.C
    return C * (math.sqrt(T / nu) * v.f_inf + v.dg_inf + _unif(v) * T * v.c_inf) * _exp(C * b * math.sqrt(T / nu))


def _interp(lo: float, hi: float, gamma: float) -> float:
    """``2^{1-gamma} lo^{1-gamma} hi^gamma``, the interpolation used to pass to Hölder moduli."""
    return 2.0 ** (1 - gamma) * lo ** (1 - gamma) * hi**gamma


def _holder_linear(v, b=None) -> float:
    return _interp(_unif(v), _grad_linear(v, b), v.gamma)


def _schauder_factor(v) -> float:
    return v.C * v.nu ** (-1 + v.gamma / 2) * v.T ** (v.gamma / 2)


def _hess_linear(v, b=None, bh=None) -> float:
    b = v.b_inf if b is None else b
    bh = v.b_holder if bh is None else bh
    k = _schauder_factor(v)
    unif, grad, hol = _unif(v), _grad_linear(v, b), _holder_linear(v, b)
    prelim = k * v.f_holder + v.d2g_inf + k * bh * grad + v.c_holder * unif + v.c_inf * hol
    a = k * 2.0 ** (1 - v.gamma) * b * unif ** (1 - v.gamma)
    return taupe_bound(a, prelim, v.gamma)


def _du_holder(v, b=None, bh=None) -> float:
    return _interp(_grad_linear(v, b), _hess_linear(v, b, bh), v.gamma)


def _hess_holder_linear(v, b=None, bh=None) -> float:
    b = v.b_inf if b is None else b
    bh = v.b_holder if bh is None else bh
    k = v.C * v.nu ** (-1 + v.gamma / 2) * (1 + v.nu**-0.5)
    unif, grad, hol = _unif(v), _grad_linear(v, b), _holder_linear(v, b)
    return k * v.f_holder + v.d2g_holder + k * (bh * grad + b * _du_holder(v, b, bh) + v.c_holder * unif + v.c_inf * hol)


def _dt_unif_linear(v, b=None, bh=None) -> float:
    b = v.b_inf if b is None else b
    bh = v.b_holder if bh is None else bh
    C, T, g = v.C, v.T, v.gamma
    k = _schauder_factor(v)
    unif, grad, hol = _unif(v), _grad_linear(v, b), _holder_linear(v, b)
    return (
        v.f_inf
        + k * v.f_holder
        + C * v.d2g_inf
        + C * (b + T ** (g / 2) * bh) * grad
        + k * b * _du_holder(v, b, bh)
        + C * (v.c_inf + v.nu ** (-1 + g / 2) * T ** (g / 2) * v.c_holder) * unif
        + v.c_inf * hol
    )


def _dt_holder_linear(v, b=None, bh=None) -> float:
    b = v.b_inf if b is None else b
    bh = v.b_holder if bh is None else bh
    K = 1 + v.C * v.nu ** (-1 + v.gamma / 2) * (1 + v.nu**-0.5)
    unif, grad, hol = _unif(v), _grad_linear(v, b), _holder_linear(v, b)
    return K * v.f_holder + v.C * v.d2g_holder + K * (b * _du_holder(v, b, bh) + bh * grad + v.c_inf * hol + v.c_holder * unif)


# -- quasi-linear family: linear chains fed with the operator envelope --------


def _grad_quasi(v) -> float:
    return _grad_linear(v, v.M_A(_unif(v)))


def _holder_quasi(v) -> float:
    return _interp(_unif(v), _grad_quasi(v), v.gamma)


def _quasi_drift(v) -> float:
    return v.M_A(_holder_quasi(v))


def _d2_quasi(v) -> float:
    m = _quasi_drift(v)
    return _hess_linear(v, m, m)


def _d2_holder_quasi(v) -> float:
    m = _quasi_drift(v)
    return _hess_holder_linear(v, m, m)


def _dt_quasi(v) -> float:
    m = _quasi_drift(v)
    return _dt_unif_linear(v, m, m)


def _dt_holder_quasi(v) -> float:
    m = _quasi_drift(v)
    return _dt_holder_linear(v, m, m)


# -- semi Navier-Stokes family ---------------------------------------------------


def _ns_energy(v) -> float:
    return math.sqrt(2.0) * v.g_l2**2 + 2.0 * v.f_l2**2


def _ns_unif(v) -> float:
    return v.T * v.f_inf + v.g_inf


def _lp_factor(v, q: float) -> float:
    """``(T||f|| + ||g||)^{(p-2)/p} E^{2/p}`` with ``p`` the conjugate of ``q``."""
    p = q / (q - 1)
    return _ns_unif(v) ** ((p - 2) / p) * _ns_energy(v) ** (2 / p)


def _du_exponent(v, q: float) -> float:
    T, nu = v.T, v.nu
    return (
        v.Cp
        * 2
        * q ** (1 - 3 / (2 * q))
        * v.C
        / (3 - 2 * q)
        * _lp_factor(v, q)
        * nu ** (-2 + 3 / (2 * q))
        * T ** ((3 - 2 * q) / (2 * q))
    )


def _weight(v) -> float:
    return 1 + (v.nu * v.T) ** (v.beta / 2)


def _ns_du_inf(v) -> float:
    base = v.C * math.sqrt(v.T / v.nu) * v.f_inf + v.dg_inf
    return base * min(_exp(_du_exponent(v, q)) for q in Q_GRID)


def _ns_du_beta(v) -> float:
    w = _weight(v)
    base = v.C * w * (math.sqrt(v.T / v.nu) * v.f_beta + v.dg_beta)
    return base * min(_exp(w * _du_exponent(v, q)) for q in Q_GRID)


def _ns_u_beta(v) -> float:
    w, T, nu = _weight(v), v.T, v.nu
    du = _ns_du_beta(v)
    tail = min(
        v.Cp * q ** (1 - 3 / (2 * q)) / (3 - q) * nu ** (-3 * (q - 1) / (2 * q)) * T ** ((3 - q) / (2 * q)) * du * _lp_factor(v, q)
        for q in Q_GRID
    )
    return v.C * w * (math.sqrt(T / nu) * v.f_beta + v.g_beta + tail)


def _ns_d2_inf(v) -> float:
    C, s = v.C, math.sqrt(v.T / v.nu)
    du = _ns_du_beta(v)
    return (_schauder_factor(v) * v.f_holder + v.d2g_inf + C * s * du * du) * _exp(C * s * _ns_u_beta(v))


def _ns_d2_beta(v) -> float:
    C, s, w = v.C, math.sqrt(v.T / v.nu), _weight(v)
    du = _ns_du_beta(v)
    return C * w * (s * v.df_beta + v.d2g_beta + C * s * du * du) * _exp(C * w * s * _ns_u_beta(v))


def _ns_holder_pieces(v) -> float:
    C, g, nu = v.C, v.gamma, v.nu
    u, du, du_inf = _ns_u_beta(v), _ns_du_beta(v), _ns_du_inf(v)
    inner = (C * du * du + C * u * _ns_d2_inf(v)) ** g
    common = u ** (1 - g) * du_inf ** (1 - g) * inner
    return C * nu ** ((g - 3) / 2) * common + C * nu ** ((g - 2) / 2) * common


def _ns_d2_holder(v) -> float:
    k = v.C * v.nu ** (-1 + v.gamma / 2) * (1 + v.nu**-0.5)
    return k * v.f_holder + v.C * v.d2g_holder + _ns_holder_pieces(v)


def _ns_dt_beta(v) -> float:
    C, s, w = v.C, math.sqrt(v.T / v.nu), _weight(v)
    u, du = _ns_u_beta(v), _ns_du_beta(v)
    return C * w * (s * v.df_beta + v.d2g_beta + u * du + s * (du * du + u * _ns_d2_beta(v)))


def _ns_dt_holder(v) -> float:
    return v.f_inf + v.f_holder + v.d2g_holder + _ns_holder_pieces(v)


# -- first-order non-linear family -----------------------------------------------


def _nl_du(v) -> float:
    return (v.T * v.df_inf + v.dg_inf) * _exp(v.T * v.c_inf)


def _nl_u(v) -> float:
    mp = v.M_P(_nl_du(v))
    return (v.T * v.f_inf + v.g_inf + v.T * mp) * _exp(v.T * mp + v.T * v.c_inf)


def _nl_d2(v) -> float:
    C, s = v.C, math.sqrt(v.T / v.nu)
    du, u = _nl_du(v), _nl_u(v)
    return C * (s * v.df_inf + v.d2g_inf + v.c_inf * u) * _exp(C * 2 * s * v.M_DP(du) * (1 + u))


CHAINS: dict[str, Callable] = {
    "unif": _unif,
    "grad_linear": _grad_linear,
    "holder_linear": _holder_linear,
    "hess_linear": _hess_linear,
    "hess_holder_linear": _hess_holder_linear,
    "dt_unif_linear": _dt_unif_linear,
    "dt_holder_linear": _dt_holder_linear,
    "grad_quasi": _grad_quasi,
    "holder_quasi": _holder_quasi,
    "d2_quasi": _d2_quasi,
    "d2_holder_quasi": _d2_holder_quasi,
    "dt_quasi": _dt_quasi,
    "dt_holder_quasi": _dt_holder_quasi,
    "ns_energy": _ns_energy,
    "ns_unif": _ns_unif,
    "ns_du_inf": _ns_du_inf,
    "ns_du_beta": _ns_du_beta,
    "ns_u_beta": _ns_u_beta,
    "ns_d2_inf": _ns_d2_inf,
    "ns_d2_beta": _ns_d2_beta,
    "ns_d2_holder": _ns_d2_holder,
    "ns_dt_beta": _ns_dt_beta,
    "ns_dt_holder": _ns_dt_holder,
    "nl_du": _nl_du,
    "nl_u": _nl_u,
    "nl_d2": _nl_d2,
}


@dataclass(frozen=True)
class LedgerEntry:
    chain: str
    value: float
    inputs: dict

    @property
    def inputs_hash(self) -> str:
        blob = json.dumps(self.inputs, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class BoundLedger:
    """Named chain evaluations with their input snapshots."""

    def __init__(self):
        self.entries: dict[str, LedgerEntry] = {}
        self._lock = threading.Lock()

    def record(self, entry: LedgerEntry) -> None:
        with self._lock:
            self.entries[entry.chain] = entry

    def __getitem__(self, chain: str) -> float:
        return self.entries[chain].value

    def __contains__(self, chain: str) -> bool:
        return chain in self.entries

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["chain", "inputs_hash", "value"])
        for name in sorted(self.entries):
            e = self.entries[name]
            w.writerow([e.chain, e.inputs_hash, repr(e.value)])
        return buf.getvalue()

    def to_json(self) -> str:
        data = {k: {"value": e.value, "inputs": e.inputs} for k, e in sorted(self.entries.items())}
        return json.dumps(data, indent=2, sort_keys=True)


def evaluate_chain(
    chain_id: str,
    inputs: BoundInputs,
    envelopes: Envelopes | None = None,
    ledger: BoundLedger | None = None,
) -> float:
    """Evaluate one chain; the result is recorded in ``ledger`` when given."""
    try:
        fn = CHAINS[chain_id]
    except KeyError:
        raise KeyError(f"unknown chain {chain_id!r}") from None
    value = float(fn(_Reader(inputs, envelopes)))
    if ledger is not None:
        ledger.record(LedgerEntry(chain_id, value, inputs.snapshot()))
    return value


def required_inputs(chain_id: str, envelopes: Envelopes | None = None) -> list[str]:
    """Names of the inputs a chain reads (discovered by evaluating on unit data)."""
    full = {f.name: 1.0 for f in fields(BoundInputs)}
    full["gamma"] = 0.5
    used: list[str] = []

    class _Spy(_Reader):
        def __getattr__(self, name):
            if not name.startswith("M_") and name not in used:
                used.append(name)
            return super().__getattr__(name)

    env = envelopes or Envelopes(M_A=lambda x: x, M_P=lambda x: x, M_DP=lambda x: x)
    CHAINS[chain_id](_Spy(BoundInputs(**full), env))
    return sorted(used)
