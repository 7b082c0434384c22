import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from paralab.field import Field, make_grid

settings.register_profile("paralab", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("paralab")


def trig_field(grid, rng, modes=3, r=1, amp=1.0):
    """Random real trigonometric polynomial sampled on ``grid`` (one snapshot)."""
    x = grid.mesh
    out = np.zeros((r,) + grid.shape)
    for c in range(r):
        for _ in range(modes):
            k = rng.integers(-modes, modes + 1, grid.d)
            phase = rng.uniform(0, 2 * math.pi)
            out[c] += rng.uniform(-1, 1) * np.cos(np.tensordot(k * math.pi / grid.L, x, axes=1) + phase)
    return Field(grid, r, [0.0], amp * out[None])


@pytest.fixture
def grid1():
    return make_grid(1, 64, math.pi)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
