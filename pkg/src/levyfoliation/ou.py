"""Stationary Levy-driven Ornstein-Uhlenbeck process ``z(theta_t omega)``.

``z`` solves ``dz = -z dt + d omega``; its stationary version is
``z(theta_t omega) = int_{-inf}^t exp(-(t - s)) d omega(s)``.  On the grid the
path is treated as piecewise linear between nodes, which makes both the
left-edge quadrature and the one-step recursion exact for that interpolant::

    z[k+1] = exp(-dt) * z[k] + (1 - exp(-dt)) / dt * (omega[k+1] - omega[k])

The running integral ``I(t) = int_0^t z(theta_s omega) ds`` is accumulated
with the trapezoidal rule in both directions from ``t = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import lfilter

from .errors import GridRangeError, ParameterDomainError
from .levy_path import SamplePath, TimeGrid

__all__ = ["OuRealization", "GrowthReport", "stationary_z", "sublinear_growth_report"]


def _cumulative_trapezoid_from_zero(values: np.ndarray, dt: float, zero: int) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = 0.0
    np.cumsum(0.5 * dt * (values[1:] + values[:-1]), out=out[1:])
    out -= out[zero]
    return out


@dataclass(frozen=True, eq=False)
class OuRealization:
    """``z`` and ``I`` sampled on a common grid containing ``t = 0``.

    Like :class:`~levyfoliation.levy_path.SamplePath`, a realization may be a
    re-anchored view of a parent realization; :meth:`shift` uses this to
    represent ``theta_s omega`` exactly at grid resolution.
    """

    grid: TimeGrid
    z_base: np.ndarray = field(repr=False)
    i_base: np.ndarray = field(repr=False)
    start: int = 0
    anchor: int = 0

    def __post_init__(self):
        if self.start < 0 or self.start + self.grid.size > self.z_base.shape[0]:
            raise GridRangeError("realization window exceeds its parent arrays")

    @classmethod
    def from_z(cls, grid: TimeGrid, z_values) -> "OuRealization":
        """Wrap explicit ``z`` node values (used for synthetic injections)."""
        z = np.array(z_values, dtype=float)
        if z.shape != (grid.size,):
            raise GridRangeError(f"expected {grid.size} z-values, got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ParameterDomainError("z-values must be finite")
        i = _cumulative_trapezoid_from_zero(z, grid.dt, grid.zero_index)
        z.flags.writeable = False
        i.flags.writeable = False
        return cls(grid, z, i, 0, grid.zero_index)

    @cached_property
    def z_values(self) -> np.ndarray:
        v = self.z_base[self.start:self.start + self.grid.size]
        v.flags.writeable = False
        return v

    @cached_property
    def integral_values(self) -> np.ndarray:
        v = self.i_base[self.start:self.start + self.grid.size] - self.i_base[self.anchor]
        v.flags.writeable = False
        return v

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def z0(self) -> float:
        """``z(omega)``, the value at ``t = 0``."""
        return float(self.z_values[self.grid.zero_index])

    def z_at(self, t: float) -> float:
        return float(self.z_values[self.grid.index_of(t)])

    def integral_at(self, t: float) -> float:
        return float(self.integral_values[self.grid.index_of(t)])

    def window_slice(self, lo: float, hi: float) -> slice:
        """Index slice of the nodes in ``[lo, hi]``; raise if it leaves the grid."""
        if lo > hi:
            lo, hi = hi, lo
        if not self.grid.contains_window(lo, hi):
            raise GridRangeError(
                f"window [{lo}, {hi}] outside realization grid "
                f"[{self.grid.t_min}, {self.grid.t_max}]")
        return slice(self.grid.index_of(lo), self.grid.index_of(hi) + 1)

    def shift(self, s: float) -> "OuRealization":
        """Realization seen from ``theta_s omega`` (times relabelled ``t -> t - s``)."""
        g = self.grid
        k = g.steps_of(s)
        if not (-g.n_neg <= k <= g.n_pos):
            raise GridRangeError(f"shift s={s} outside [{g.t_min}, {g.t_max}]")
        new_grid = TimeGrid.from_counts(g.n_neg + k, g.n_pos - k, g.dt)
        return OuRealization(new_grid, self.z_base, self.i_base, self.start, self.anchor + k)


def stationary_z(path: SamplePath, burn_in: float = 40.0, window=None) -> OuRealization:
    """Stationary OU realization driven by ``path``.

    Parameters
    ----------
    path : SamplePath
        Driving two-sided path.
    burn_in : float
        Truncation lag of ``int_{-inf}^0``.  The path must extend ``burn_in``
        below the first evaluation time.
    window : (float, float), optional
        Evaluation window; defaults to ``[path.t_min + burn_in, path.t_max]``.

    Returns
    -------
    OuRealization
    """
    g = path.grid
    if not (burn_in > 0.0):
        raise ParameterDomainError("burn_in must be positive")
    nb = int(math.ceil(burn_in / g.dt - 1e-9))
    if window is None:
        lo_k, hi_k = -(g.n_neg - nb), g.n_pos
    else:
        lo_k, hi_k = g.steps_of(window[0]), g.steps_of(window[1])
    if lo_k > 0 or hi_k < 0:
        raise GridRangeError(
            f"path of length {-g.t_min} below 0 cannot supply burn_in={burn_in} "
            "and still cover t = 0")
    if lo_k - nb < -g.n_neg or hi_k > g.n_pos:
        raise GridRangeError(
            f"evaluation window [{lo_k * g.dt}, {hi_k * g.dt}] needs the path on "
            f"[{(lo_k - nb) * g.dt}, {hi_k * g.dt}], have [{g.t_min}, {g.t_max}]")

    h = g.dt
    decay = math.exp(-h)
    weight = -math.expm1(-h) / h
    omega = path.values
    i_left = g.zero_index + lo_k
    i_right = g.zero_index + hi_k

    # Direct quadrature at the left edge, truncated at lag nb * dt.
    d_tail = np.diff(omega[i_left - nb:i_left + 1])
    lags = np.arange(nb - 1, -1, -1) * h
    z_left = (weight * np.dot(np.exp(-lags), d_tail)
              + math.exp(-nb * h) * omega[i_left - nb])

    d_win = np.diff(omega[i_left:i_right + 1])
    z = np.empty(hi_k - lo_k + 1)
    z[0] = z_left
    if d_win.size:
        z[1:], _ = lfilter([weight], [1.0, -decay], d_win, zi=[decay * z_left])
    if not np.all(np.isfinite(z)):
        raise ParameterDomainError("non-finite OU values; check the driving path")
    grid = TimeGrid.from_counts(-lo_k, hi_k, h)
    return OuRealization.from_z(grid, z)


@dataclass(frozen=True)
class GrowthReport:
    """Growth ratios at dyadic horizons ``T0 * 2**k``.

    ``z_ratios[k] = max(|z(T)|, |z(-T)|) / T`` and
    ``integral_ratios[k] = max(|I(T)|, |I(-T)|) / T``.
    """

    horizons: np.ndarray
    z_ratios: np.ndarray
    integral_ratios: np.ndarray
    z_shrinks: bool
    integral_shrinks: bool

    @property
    def passed(self) -> bool:
        return self.z_shrinks and self.integral_shrinks

    @property
    def max_z_ratio(self) -> float:
        return float(self.z_ratios.max())

    @property
    def max_integral_ratio(self) -> float:
        return float(self.integral_ratios.max())


def _shrinks(r: np.ndarray) -> bool:
    if np.all(r == 0.0):
        return True
    return bool(r[-1] < r[0] * (1.0 - 1e-9))


def sublinear_growth_report(ou: OuRealization, t0: float = 100.0) -> GrowthReport:
    """Check that ``|z(theta_T omega)| / T`` and ``|I(T)| / T`` shrink with ``T``.

    A quantity "shrinks" when its ratio at the largest horizon is below the
    ratio at ``t0`` by more than rounding (identically zero ratios also count).
    """
    g = ou.grid
    reach = min(-g.t_min, g.t_max)
    if reach < max(t0, 100.0) - 1e-9:
        raise GridRangeError(
            f"window must extend at least {max(t0, 100.0)} on each side, has {reach}")
    horizons = [t0]
    while horizons[-1] * 2 <= reach + 1e-9:
        horizons.append(horizons[-1] * 2)
    horizons = np.array(horizons)
    zr, ir = [], []
    for T in horizons:
        ip, im = g.index_of(T), g.index_of(-T)
        zr.append(max(abs(ou.z_values[ip]), abs(ou.z_values[im])) / T)
        ir.append(max(abs(ou.integral_values[ip]), abs(ou.integral_values[im])) / T)
    zr, ir = np.array(zr), np.array(ir)
    return GrowthReport(horizons, zr, ir, _shrinks(zr), _shrinks(ir))
