"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from paralab import _purepy
from paralab.field import _displacement_table

try:
    from paralab import _kernels
except ImportError:
    _kernels = None


def cases():
    rng = np.random.default_rng(0)
    for d, n in ((1, 4096), (2, 128), (3, 32)):
        v = rng.standard_normal((n,) * d)
        table = _displacement_table(d, n, True)[:64]
        for periodic in (True, False):
            mode = "torus" if periodic else "box"
            yield f"holder d={d} n={n} {mode}", "holder_ratio_max", (v, table, 2.0 / n, 0.5, periodic)
    for d in (1, 3):
        vals = rng.standard_normal((3,) + (32,) * d)
        X = rng.uniform(-5, 5, (100_000, d))
        yield f"interp d={d} 1e5 points", "interp_periodic", (vals, 1.0, X)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not available; only the fallback can be timed")
    print(f"{'case':32s} {'numpy [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for label, name, call in cases():
        t_py = min(timeit.repeat(lambda: getattr(_purepy, name)(*call), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{label:32s} {1e3 * t_py:12.2f}")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(_kernels, name)(*call), number=1, repeat=args.repeat))
        print(f"{label:32s} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.1f}")


if __name__ == "__main__":
    main()
