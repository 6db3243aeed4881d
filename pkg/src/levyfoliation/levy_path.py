"""Two-sided symmetric alpha-stable Levy paths on a uniform time grid.

Paths are sampled with the Chambers-Mallows-Stuck transform and glued at
``t = 0`` from two independent one-sided branches.  The metric-dynamical
shift ``theta_t omega = omega(. + t) - omega(t)`` is exact at grid
resolution: shifting only re-anchors an index into the parent cumulative
array, so compositions of shifts are bit-identical to a single shift.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridRangeError, ParameterDomainError

__all__ = [
    "StableParams",
    "TimeGrid",
    "SamplePath",
    "make_rng",
    "sample_stable_increment",
    "sample_stable_increments",
    "generate_two_sided_path",
    "shift_path",
    "coarsen_path",
    "write_path",
    "read_path",
]

_GRID_RTOL = 1e-9


@dataclass(frozen=True)
class StableParams:
    """Symmetric stable law S(alpha, 0, scale, 0) plus the seed of its stream."""

    alpha: float
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise ParameterDomainError(
                f"alpha must lie in the open interval (1, 2), got {self.alpha}")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ParameterDomainError(f"scale must be positive, got {self.scale}")
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterDomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``{k * dt}`` covering ``[t_min, t_max]`` and containing 0.

    Node times are generated as integer multiples of ``dt`` so that ``t = 0``
    is represented exactly.
    """

    t_min: float
    t_max: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ParameterDomainError(f"dt must be positive, got {self.dt}")
        if self.t_min > 0.0 or self.t_max < 0.0:
            raise ParameterDomainError("grid must satisfy t_min <= 0 <= t_max")
        for name in ("t_min", "t_max"):
            steps = getattr(self, name) / self.dt
            if abs(steps - round(steps)) > _GRID_RTOL * max(1.0, abs(steps)):
                raise ParameterDomainError(
                    f"{name}={getattr(self, name)} is not a multiple of dt={self.dt}")

    @classmethod
    def from_counts(cls, n_neg: int, n_pos: int, dt: float) -> "TimeGrid":
        return cls(-n_neg * dt, n_pos * dt, dt)

    @property
    def n_neg(self) -> int:
        return int(round(-self.t_min / self.dt))

    @property
    def n_pos(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def size(self) -> int:
        return self.n_neg + self.n_pos + 1

    @property
    def zero_index(self) -> int:
        return self.n_neg

    @cached_property
    def times(self) -> np.ndarray:
        t = np.arange(-self.n_neg, self.n_pos + 1, dtype=float) * self.dt
        t.flags.writeable = False
        return t

    def steps_of(self, t: float) -> int:
        """Signed number of steps from 0 to ``t``; raise if ``t`` is off-grid."""
        steps = t / self.dt
        k = int(round(steps))
        if abs(steps - k) > _GRID_RTOL * max(1.0, abs(steps)):
            raise GridRangeError(f"t={t} is not a grid node (dt={self.dt})")
        return k

    def index_of(self, t: float) -> int:
        k = self.steps_of(t)
        if not (-self.n_neg <= k <= self.n_pos):
            raise GridRangeError(
                f"t={t} outside grid window [{self.t_min}, {self.t_max}]")
        return k + self.n_neg

    def contains_window(self, lo: float, hi: float) -> bool:
        tol = _GRID_RTOL * self.dt
        return self.t_min - tol <= lo and hi <= self.t_max + tol

    def is_compatible(self, other: "TimeGrid") -> bool:
        return abs(self.dt - other.dt) <= _GRID_RTOL * self.dt


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Discretized two-sided path, ``values[k] = omega(grid.times[k])``.

    The values are a view ``base[start:start+size] - base[anchor]`` of a parent
    cumulative array; use :meth:`from_values` to wrap an explicit array.
    """

    grid: TimeGrid
    base: np.ndarray = field(repr=False)
    start: int = 0
    anchor: int = 0
    params: StableParams | None = None

    def __post_init__(self):
        if self.start < 0 or self.start + self.grid.size > self.base.shape[0]:
            raise GridRangeError("path window exceeds its parent array")
        if self.anchor != self.start + self.grid.zero_index:
            raise GridRangeError("anchor must coincide with t = 0")

    @classmethod
    def from_values(cls, grid: TimeGrid, values, params=None) -> "SamplePath":
        """Wrap explicit node values; the value at ``t = 0`` is subtracted."""
        base = np.array(values, dtype=float)
        if base.shape != (grid.size,):
            raise GridRangeError(
                f"expected {grid.size} values for the grid, got {base.shape}")
        if not np.all(np.isfinite(base)):
            raise ParameterDomainError("path values must be finite")
        base.flags.writeable = False
        return cls(grid, base, 0, grid.zero_index, params)

    @cached_property
    def values(self) -> np.ndarray:
        v = self.base[self.start:self.start + self.grid.size] - self.base[self.anchor]
        v.flags.writeable = False
        return v

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __call__(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def __len__(self):
        return self.grid.size


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _cms_symmetric(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    # Chambers-Mallows-Stuck, beta = 0, unit scale
    v = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = rng.standard_exponential(size)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def sample_stable_increments(params: StableParams, dt: float, size,
                             rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. increments over a step ``dt`` (scale ``scale * dt**(1/alpha)``)."""
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ParameterDomainError(f"dt must be positive, got {dt}")
    return params.scale * dt ** (1.0 / params.alpha) * _cms_symmetric(
        params.alpha, size, rng)


def sample_stable_increment(params: StableParams, dt: float,
                            rng: np.random.Generator) -> float:
    """One increment of the Levy motion over a step of length ``dt``."""
    return float(sample_stable_increments(params, dt, None, rng))


def generate_two_sided_path(params: StableParams, grid: TimeGrid) -> SamplePath:
    """Sample ``omega`` on ``grid`` with ``omega(0) = 0``.

    The positive branch is a forward random walk of stable increments.  The
    negative branch is an independent forward walk ``L'`` mapped through
    ``omega(-s) = -L'(s)``, so every grid increment of the glued path is an
    independent draw of the same law.
    """
    pos_seq, neg_seq = np.random.SeedSequence(int(params.seed)).spawn(2)
    pos_rng = np.random.Generator(np.random.Philox(pos_seq))
    neg_rng = np.random.Generator(np.random.Philox(neg_seq))
    pos = sample_stable_increments(params, grid.dt, grid.n_pos, pos_rng)
    neg = sample_stable_increments(params, grid.dt, grid.n_neg, neg_rng)
    base = np.empty(grid.size)
    z = grid.zero_index
    base[z] = 0.0
    base[z + 1:] = np.cumsum(pos)
    base[:z] = -np.cumsum(neg)[::-1]
    base.flags.writeable = False
    return SamplePath(grid, base, 0, z, params)


def shift_path(path: SamplePath, t: float, window=None) -> SamplePath:
    """Return ``theta_t omega``: ``s -> omega(s + t) - omega(t)``.

    Without ``window`` the result covers every representable ``s``, i.e.
    ``[t_min - t, t_max - t]``.  A requested ``window=(s_lo, s_hi)`` must fit
    inside the source path; nothing is extrapolated.
    """
    g = path.grid
    k = g.steps_of(t)
    if not (-g.n_neg <= k <= g.n_pos):
        raise GridRangeError(f"shift t={t} outside path window [{g.t_min}, {g.t_max}]")
    n_neg, n_pos = g.n_neg + k, g.n_pos - k
    if window is not None:
        lo, hi = window
        lo_k, hi_k = g.steps_of(lo), g.steps_of(hi)
        if lo_k > 0 or hi_k < 0:
            raise GridRangeError("window must contain s = 0")
        if -lo_k > n_neg or hi_k > n_pos:
            raise GridRangeError(
                f"shifted window [{lo}, {hi}] needs path on "
                f"[{lo + t}, {hi + t}], have [{g.t_min}, {g.t_max}]")
        n_neg, n_pos = -lo_k, hi_k
    new_grid = TimeGrid.from_counts(n_neg, n_pos, g.dt)
    anchor = path.anchor + k
    return SamplePath(new_grid, path.base, anchor - n_neg, anchor, path.params)


def coarsen_path(path: SamplePath, factor: int) -> SamplePath:
    """Restrict ``path`` to every ``factor``-th node around ``t = 0``.

    The result is an exact sample of the same motion on the coarser grid,
    which makes convergence studies path-consistent.
    """
    if factor < 1:
        raise ParameterDomainError("factor must be a positive integer")
    g = path.grid
    n_neg, n_pos = g.n_neg // factor, g.n_pos // factor
    z = g.zero_index
    idx = z + factor * np.arange(-n_neg, n_pos + 1)
    return SamplePath.from_values(
        TimeGrid.from_counts(n_neg, n_pos, g.dt * factor), path.values[idx], path.params)


_HEADER = struct.Struct("<ddddQ")


def write_path(path: SamplePath, fileobj) -> None:
    """Binary dump: ``<alpha, t_min, t_max, dt : f64, count : u64>`` + f64 values."""
    alpha = path.params.alpha if path.params is not None else float("nan")
    g = path.grid
    fileobj.write(_HEADER.pack(alpha, g.t_min, g.t_max, g.dt, g.size))
    fileobj.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def read_path(fileobj, seed: int = 0) -> SamplePath:
    alpha, t_min, t_max, dt, count = _HEADER.unpack(fileobj.read(_HEADER.size))
    values = np.frombuffer(fileobj.read(8 * count), dtype="<f8")
    if values.shape[0] != count:
        raise GridRangeError("truncated path file")
    grid = TimeGrid(t_min, t_max, dt)
    params = None if math.isnan(alpha) else StableParams(alpha, seed=seed)
    return SamplePath.from_values(grid, values, params)
