import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paralab import _purepy, kernels
from paralab.field import _displacement_table

try:
    from paralab import _kernels
except ImportError:  # pragma: no cover - exercised only without a compiler
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def test_backend_name():
    assert kernels.BACKEND == ("cython" if _kernels is not None and os.environ.get("PARALAB_BACKEND") != "python" else "python")


def test_environment_forces_fallback():
    out = subprocess.run(
        [sys.executable, "-c", "from paralab import kernels; print(kernels.BACKEND)"],
        env={**os.environ, "PARALAB_BACKEND": "python"},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"


@needs_ext
@settings(max_examples=40)
@given(st.integers(1, 3), st.sampled_from([8, 10, 16]), st.booleans(), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
def test_holder_parity(d, n, periodic, gamma, seed):
    v = np.random.default_rng(seed).standard_normal((n,) * d)
    table = _displacement_table(d, n, periodic)
    h = 2.0 / n
    a = _kernels.holder_ratio_max(v, table, h, gamma, periodic)
    b = _purepy.holder_ratio_max(v, table, h, gamma, periodic)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


@needs_ext
@settings(max_examples=40)
@given(st.integers(1, 3), st.integers(1, 3), st.sampled_from([8, 12]), st.integers(0, 2**31 - 1))
def test_interp_parity(d, r, n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((r,) + (n,) * d)
    X = rng.uniform(-7, 7, (50, d))
    a = _kernels.interp_periodic(v, 1.5, X)
    b = _purepy.interp_periodic(v, 1.5, X)
    assert np.max(np.abs(a - b)) <= 1e-12


@pytest.mark.parametrize("impl", [_purepy] + ([_kernels] if _kernels is not None else []))
def test_interp_oracles(impl):
    n, L = 8, 1.0
    h = 2 * L / n
    v = np.random.default_rng(0).standard_normal((1, n, n))
    nodes = np.array([[-L + 3 * h, -L + 5 * h], [-L, -L]])
    assert np.allclose(impl.interp_periodic(v, L, nodes)[:, 0], [v[0, 3, 5], v[0, 0, 0]], atol=1e-14)
    centre = np.array([[-L + 2.5 * h, -L + 6.5 * h]])
    expect = v[0, 2:4, 6:8].mean()
    assert impl.interp_periodic(v, L, centre)[0, 0] == pytest.approx(expect, abs=1e-14)
    # periodic wrap
    assert np.allclose(impl.interp_periodic(v, L, nodes + 2 * L), impl.interp_periodic(v, L, nodes), atol=1e-13)


@pytest.mark.parametrize("impl", [_purepy] + ([_kernels] if _kernels is not None else []))
def test_holder_brute_force(impl):
    n, h, gamma = 8, 0.25, 0.5
    v = np.random.default_rng(3).standard_normal(n)
    best = 0.0
    for i in range(n):
        for j in range(n):
            k = min(abs(i - j), n - abs(i - j))
            if k:
                best = max(best, abs(v[i] - v[j]) / (k * h) ** gamma)
    table = np.arange(1, n // 2 + 1)[:, None]
    assert impl.holder_ratio_max(v, table, h, gamma, True) == pytest.approx(best, rel=1e-14)
