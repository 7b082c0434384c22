"""Periodic grids, sampled space-time fields and the norm estimators.

The whole space is emulated by the periodic box ``[-L, L)^d``.  Every
supremum over space becomes a maximum over the grid nodes, so the box half
width is an experiment parameter rather than a numerical detail.

Conventions used by every estimator in this module:

* ``linf_norm`` and ``beta_weighted_norm`` take the maximum absolute entry over
  components and nodes.
* ``lp_norm`` sums ``|psi_i|^p`` over components and nodes (Riemann sum), so the
  ``p = 2`` case is the usual vector-field L2 norm and satisfies Parseval.
* gradient and Hessian sup norms use the pointwise Euclidean (Frobenius) length
  of the derivative of each component.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from paralab import kernels

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on the periodic box ``[-L, L)^d`` with ``n`` nodes per axis."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 4 or self.n % 2:
            raise ValueError(f"points per axis must be even and >= 4, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box half width must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def axes(self) -> tuple[int, ...]:
        """Spatial axes of an array whose trailing ``d`` dimensions are space."""
        return tuple(range(-self.d, 0))

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(d, n, ..., n)``."""
        return np.stack(np.meshgrid(*([self.nodes] * self.d), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """Euclidean distance of every node to the box centre."""
        return np.sqrt(np.sum(self.mesh**2, axis=0))

    # -- spectral helpers -------------------------------------------------
    @cached_property
    def _k1(self) -> np.ndarray:
        return (np.pi / self.L) * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def _k1_half(self) -> np.ndarray:
        return (np.pi / self.L) * np.fft.rfftfreq(self.n, d=1.0 / self.n)

    def k(self, axis: int, odd: bool = True) -> np.ndarray:
        """Wavenumbers along ``axis`` shaped to broadcast against ``rfft`` output.

        With ``odd`` the Nyquist wavenumber is zeroed, which is the right choice
        for odd-order derivatives of real data.
        """
        kk = (self._k1_half if axis == self.d - 1 else self._k1).copy()
        if odd:
            kk[np.abs(kk) >= self.n * np.pi / (2 * self.L) - 1e-12] = 0.0
        shape = [1] * self.d
        shape[axis] = kk.size
        return kk.reshape(shape)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(self.k(j, odd=False) ** 2 for j in range(self.d))

    def quad_form(self, A: np.ndarray) -> np.ndarray:
        """``<A xi, xi>`` on the rfft wavenumber grid for a symmetric ``d x d`` matrix."""
        A = np.asarray(A, dtype=float)
        out = 0.0
        for i in range(self.d):
            ki = self.k(i, odd=False)
            for j in range(self.d):
                if A[i, j] != 0.0:
                    out = out + A[i, j] * ki * self.k(j, odd=False)
        return np.broadcast_to(out, self.spectral_shape).copy() if np.ndim(out) else np.zeros(self.spectral_shape)

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    def fft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(a, axes=self.axes)

    def ifft(self, ah: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(ah, s=self.shape, axes=self.axes)

    def gradient_hat(self, ah: np.ndarray) -> np.ndarray:
        """Spectral gradient; a new axis of length ``d`` is inserted before space."""
        return np.stack([1j * self.k(j) * ah for j in range(self.d)], axis=-self.d - 1)

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "L": self.L}


def make_grid(d: int, n: int, L: float) -> SpaceGrid:
    return SpaceGrid(int(d), int(n), float(L))


@dataclass(frozen=True, eq=False)
class Field:
    """Space-time samples of an ``r``-component function on a ``SpaceGrid``.

    ``values`` has shape ``(len(times), r, n, ..., n)`` and is stored
    read-only; operations always return new fields.
    """

    grid: SpaceGrid
    r: int
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float)
        if times.size == 0 or times[0] != 0.0:
            raise ValueError("times must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        expected = (times.size, self.r) + self.grid.shape
        if values.shape != expected:
            raise ValueError(f"values shape {values.shape} does not match {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: SpaceGrid, fn: Callable, times: Sequence[float] = (0.0,), r: int = 1) -> "Field":
        """Sample ``fn(t, x)`` where ``x`` has shape ``(d, n, ..., n)``.

        ``fn`` may return an array of shape ``(r, n, ..., n)`` or, when
        ``r == 1``, just the spatial array.
        """
        times = np.asarray(times, dtype=float).reshape(-1)
        vals = np.empty((times.size, r) + grid.shape)
        for i, t in enumerate(times):
            vals[i] = np.broadcast_to(fn(t, grid.mesh), (r,) + grid.shape)
        return cls(grid, r, times, vals)

    @classmethod
    def constant_in_time(cls, grid: SpaceGrid, snapshot: np.ndarray, times: Sequence[float]) -> "Field":
        snapshot = np.asarray(snapshot, dtype=float)
        if snapshot.ndim == grid.d:
            snapshot = snapshot[None]
        times = np.asarray(times, dtype=float).reshape(-1)
        vals = np.broadcast_to(snapshot, (times.size,) + snapshot.shape)
        return cls(grid, snapshot.shape[0], times, vals)

    def snapshot(self, time_index: int = -1) -> np.ndarray:
        return self.values[time_index]

    def scaled(self, c: float) -> "Field":
        return Field(self.grid, self.r, self.times, c * self.values)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.r, self.times, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.r, self.times, self.values - other.values)

    def at_time(self, t: float) -> np.ndarray:
        """Linear interpolation in time; exact at sample instants."""
        times = self.times
        if t < times[0] - 1e-14 or t > times[-1] + 1e-12 * max(1.0, times[-1]):
            raise ValueError(f"time {t} outside sampled range [{times[0]}, {times[-1]}]")
        j = int(np.searchsorted(times, t, side="right")) - 1
        j = min(max(j, 0), times.size - 1)
        if j == times.size - 1 or t == times[j]:
            return self.values[j]
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]


# -- norms ----------------------------------------------------------------


def linf_norm(field: Field, time_index: int = -1) -> float:
    return float(np.max(np.abs(field.values[time_index])))


def lp_norm(field: Field, time_index: int = -1, p: float = 2.0) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(field.values[time_index]).ravel()
    if p == 2:
        s = math.fsum((a * a).tolist()) if a.size <= 1 << 16 else float(np.dot(a, a))
        return math.sqrt(s * field.grid.cell_volume)
    m = a.max()
    if m == 0:
        return 0.0
    s = float(np.sum((a / m) ** p))
    return m * (s * field.grid.cell_volume) ** (1.0 / p)


def l2_norm(field: Field, time_index: int = -1) -> float:
    return lp_norm(field, time_index, 2.0)


def beta_weighted_norm(field: Field, time_index: int = -1, beta: float = 0.0) -> float:
    """``sup (1 + |x|^beta) |psi(x)|`` over the box; a truncated proxy for the whole space."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    weight = 1.0 + field.grid.radius**beta
    return float(np.max(weight * np.max(np.abs(field.values[time_index]), axis=0)))


_DISP_CACHE: dict[tuple[int, int, bool], np.ndarray] = {}


def _displacement_table(d: int, n: int, periodic: bool = True) -> np.ndarray:
    """Deterministic ordering of displacement classes.

    Nearest neighbours come first, then axis displacements at dyadic scales,
    then everything else by length.  Each row represents the class
    ``{delta, -delta}`` so every unordered node pair is visited exactly once.
    On the torus displacements are reduced modulo ``n``; in the box they range
    over ``|delta_j| < n``.
    """
    key = (d, n, periodic)
    if key in _DISP_CACHE:
        return _DISP_CACHE[key]
    span = np.arange(-(n // 2) + 1, n // 2 + 1) if periodic else np.arange(-(n - 1), n)
    cells = np.stack(np.meshgrid(*([span] * d), indexing="ij"), axis=-1).reshape(-1, d)
    cells = cells[np.any(cells != 0, axis=1)]
    if periodic:
        # delta and -delta (mod n) are the same class; keep the first seen
        canon, seen = [], set()
        for c in cells:
            neg = tuple(int((-v + n // 2 - 1) % n - n // 2 + 1) for v in c)
            if neg in seen:
                continue
            seen.add(tuple(int(v) for v in c))
            canon.append(c)
        canon = np.array(canon, dtype=np.int64)
    else:
        first = cells[np.arange(cells.shape[0]), np.argmax(cells != 0, axis=1)]
        canon = cells[first > 0].astype(np.int64)
    length2 = np.sum(canon.astype(float) ** 2, axis=1)
    n_axes = np.sum(canon != 0, axis=1)
    absmax = np.max(np.abs(canon), axis=1)
    dyadic = (n_axes == 1) & ((absmax & (absmax - 1)) == 0)
    tier = np.where(length2 == 1, 0, np.where(dyadic, 1, 2))
    order = np.lexsort(tuple(canon[:, j] for j in reversed(range(d))) + (length2, tier))
    table = canon[order]
    table.flags.writeable = False
    _DISP_CACHE[key] = table
    return table


def holder_seminorm(
    field: Field,
    time_index: int = -1,
    gamma: float = 1.0,
    pair_budget: int | None = None,
    periodic: bool = True,
) -> float:
    """Lower estimate of the Hölder-``gamma`` seminorm from node pairs.

    Pairs are generated as ``(x, x + delta)`` for every node ``x`` and a prefix
    of a fixed displacement ordering, so a larger budget examines a superset
    of pairs and the estimate is monotone in ``pair_budget``.  ``None`` means
    all pairs.  Distances are torus distances unless ``periodic`` is false,
    in which case only pairs inside the box are compared (useful for data
    that is not periodic, such as a linear ramp).
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    grid = field.grid
    table = _displacement_table(grid.d, grid.n, periodic)
    if pair_budget is not None:
        if pair_budget < grid.n:
            raise ValueError("pair_budget must be at least n")
        n_disp = max(1, min(table.shape[0], int(pair_budget) // grid.size))
        table = table[:n_disp]
    snap = field.values[time_index]
    best = 0.0
    for comp in range(field.r):
        best = max(best, kernels.holder_ratio_max(snap[comp], table, grid.h, gamma, periodic))
    return best


def _derivative_fd4(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (-np.roll(a, -2, axis) + 8 * np.roll(a, -1, axis) - 8 * np.roll(a, 1, axis) + np.roll(a, 2, axis)) / (12 * h)


def _second_fd4(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (
        -np.roll(a, -2, axis) + 16 * np.roll(a, -1, axis) - 30 * a + 16 * np.roll(a, 1, axis) - np.roll(a, 2, axis)
    ) / (12 * h * h)


def gradient_values(grid: SpaceGrid, snap: np.ndarray, mode: str = "spectral") -> np.ndarray:
    """Gradient of ``(r, *space)`` samples, returned with shape ``(r, d, *space)``."""
    if mode == "spectral":
        return grid.ifft(grid.gradient_hat(grid.fft(snap)))
    if mode == "fd4":
        return np.stack([_derivative_fd4(snap, ax, grid.h) for ax in grid.axes], axis=-grid.d - 1)
    raise ValueError(f"unknown differentiation mode {mode!r}")


def hessian_values(grid: SpaceGrid, snap: np.ndarray, mode: str = "spectral") -> np.ndarray:
    """Hessian of ``(r, *space)`` samples, shape ``(r, d, d, *space)``."""
    d = grid.d
    out = np.empty(snap.shape[:1] + (d, d) + grid.shape)
    if mode == "spectral":
        sh = grid.fft(snap)
        for i in range(d):
            for j in range(i, d):
                if i == j:
                    mult = -grid.k(i, odd=False) ** 2
                else:
                    mult = -grid.k(i) * grid.k(j)
                out[:, i, j] = out[:, j, i] = grid.ifft(mult * sh)
        return out
    if mode == "fd4":
        axes = grid.axes
        for i in range(d):
            for j in range(i, d):
                if i == j:
                    v = _second_fd4(snap, axes[i], grid.h)
                else:
                    v = _derivative_fd4(_derivative_fd4(snap, axes[i], grid.h), axes[j], grid.h)
                out[:, i, j] = out[:, j, i] = v
        return out
    raise ValueError(f"unknown differentiation mode {mode!r}")


def fd_gradient(field: Field, time_index: int = -1, mode: str = "spectral") -> Field:
    """Gradient at one instant as a single-time field with ``r * d`` components."""
    if field.grid.n < 8:
        raise ValueError("differentiation needs at least 8 points per axis")
    g = gradient_values(field.grid, field.values[time_index], mode)
    return Field(field.grid, field.r * field.grid.d, [0.0], g.reshape((1, -1) + field.grid.shape))


def fd_hessian(field: Field, time_index: int = -1, mode: str = "spectral") -> Field:
    if field.grid.n < 8:
        raise ValueError("differentiation needs at least 8 points per axis")
    hs = hessian_values(field.grid, field.values[time_index], mode)
    return Field(field.grid, field.r * field.grid.d**2, [0.0], hs.reshape((1, -1) + field.grid.shape))


def grad_linf(field: Field, time_index: int = -1) -> float:
    g = gradient_values(field.grid, field.values[time_index])
    return float(np.max(np.sqrt(np.sum(g * g, axis=1))))


def hess_linf(field: Field, time_index: int = -1) -> float:
    hs = hessian_values(field.grid, field.values[time_index])
    return float(np.max(np.sqrt(np.sum(hs * hs, axis=(1, 2)))))


# -- reports ----------------------------------------------------------------


@dataclass
class NormReport:
    l_inf: float
    holder_gamma: tuple[float, float]
    grad_l_inf: float
    hess_l_inf: float
    l2: float
    lp: dict[float, float] = dc_field(default_factory=dict)
    beta_weighted: dict[float, float] = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "l_inf": self.l_inf,
            "holder_gamma": {"gamma": self.holder_gamma[0], "value": self.holder_gamma[1]},
            "grad_l_inf": self.grad_l_inf,
            "hess_l_inf": self.hess_l_inf,
            "l2": self.l2,
            "lp": {repr(float(k)): v for k, v in sorted(self.lp.items())},
            "beta_weighted": {repr(float(k)): v for k, v in sorted(self.beta_weighted.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def norm_report(
    field: Field,
    time_index: int = -1,
    gamma: float = 0.5,
    ps: Sequence[float] = (),
    betas: Sequence[float] = (),
    pair_budget: int | None = None,
) -> NormReport:
    with_derivs = field.grid.n >= 8
    return NormReport(
        l_inf=linf_norm(field, time_index),
        holder_gamma=(gamma, holder_seminorm(field, time_index, gamma, pair_budget)),
        grad_l_inf=grad_linf(field, time_index) if with_derivs else float("nan"),
        hess_l_inf=hess_linf(field, time_index) if with_derivs else float("nan"),
        l2=l2_norm(field, time_index),
        lp={float(p): lp_norm(field, time_index, p) for p in ps},
        beta_weighted={float(b): beta_weighted_norm(field, time_index, b) for b in betas},
    )


# -- serialisation -------------------------------------------------------------


def save_field(field: Field, path: str | Path) -> Path:
    """Write a self-describing ``.npz`` container (metadata travels as JSON)."""
    path = Path(path)
    meta = {"format": "paralab-field", "version": FORMAT_VERSION, "grid": field.grid.to_dict(), "r": field.r}
    with open(path, "wb") as fh:
        np.savez(fh, values=np.asarray(field.values), times=np.asarray(field.times), meta=np.array(json.dumps(meta)))
    return path


def load_field(path: str | Path) -> Field:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "paralab-field":
            raise ValueError(f"{path} is not a field container")
        grid = make_grid(**meta["grid"])
        return Field(grid, int(meta["r"]), data["times"], data["values"])


def field_to_csv(field: Field, path: str | Path, time_index: int = -1) -> Path:
    """One row per node: coordinates then component values."""
    path = Path(path)
    grid = field.grid
    coords = grid.mesh.reshape(grid.d, -1).T
    vals = field.values[time_index].reshape(field.r, -1).T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(grid.d)] + [f"u{i}" for i in range(field.r)])
        for xc, vc in zip(coords, vals):
            w.writerow([repr(float(v)) for v in xc] + [repr(float(v)) for v in vc])
    return path
