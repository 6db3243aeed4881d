"""Verification instruments for fibers, manifolds and the noise layer.

Decay fits subtract the running integral ``I(t)`` from the log-difference, so
a difference that behaves like ``C exp(eta t + I(t))`` shows up as a straight
line of slope ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import GridRangeError, ParameterDomainError
from .levy_path import StableParams
from .lyapunov_perron import (
    DifferenceOrbit,
    EtaWeights,
    FiberGraph,
    LPParams,
    ManifoldGraph,
    _check_gap,
    _picard,
    base_orbit,
    lp_operator,
    unstable_fiber,
    weighted_norm,
)
from .ou import OuRealization
from .rds import State, SystemSpec, integrate_rde

__all__ = [
    "DecayFit",
    "OracleReport",
    "fit_decay",
    "backward_decay_check",
    "forward_decay_check",
    "invariance_residual",
    "parallelism_check",
    "manifold_coincidence",
    "example5_oracle",
    "example5_fiber_report",
    "example5_manifold_report",
    "contraction_ratios",
    "continuous_dependence_ratios",
    "picard_ratios",
    "stable_law_ks",
    "symmetry_ks",
    "stationarity_ks",
]


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through ``log|phi(t)| - I(t)``.

    ``max_violation`` is the largest excess of the data over the bound line
    ``log_bound + eta t`` (``-inf`` when the difference vanishes identically,
    ``nan`` when no bound applies).  ``direct_mismatch`` compares the
    Lyapunov-Perron difference with directly integrated orbits on a short
    window, relative to the size of the direct orbit (``nan`` if not
    computed).
    """

    window: tuple
    slope: float
    intercept: float
    max_violation: float
    eta: float = float("nan")
    log_bound: float = float("nan")
    direct_mismatch: float = float("nan")

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ParameterDomainError("decay-fit window must be nonempty")


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    computed: np.ndarray
    expected: np.ndarray
    max_abs_error: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.shape(self.computed) != np.shape(self.expected):
            raise ParameterDomainError("computed and expected arrays differ in shape")

    @classmethod
    def compare(cls, quantity, computed, expected, tolerance, **details):
        c = np.asarray(computed, dtype=float)
        e = np.asarray(expected, dtype=float)
        err = float(np.max(np.abs(c - e))) if c.size else 0.0
        return cls(quantity, c, e, err, tolerance, bool(err <= tolerance), details)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.quantity}: max abs error {self.max_abs_error:.3g} (tol {self.tolerance:g})"


def fit_decay(times, diff_norm, integral, eta=float("nan"), log_bound=float("nan"),
              trim: float = 0.1) -> DecayFit:
    """Fit ``log(diff_norm) - integral`` against ``times``.

    The line is fitted by ordinary least squares on the middle
    ``1 - 2 trim`` fraction of the window; the bound check uses every node
    with a nonzero difference.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(diff_norm, dtype=float)
    i = np.asarray(integral, dtype=float)
    window = (float(t.min()), float(t.max()))
    pos = d > 0
    if not np.any(pos):
        return DecayFit(window, 0.0, -math.inf, -math.inf, eta, log_bound)
    y = np.full_like(d, -np.inf)
    y[pos] = np.log(d[pos]) - i[pos]
    order = np.argsort(t)
    k = order.size
    mid = order[int(math.floor(trim * k)):int(math.ceil((1 - trim) * k))]
    mid = mid[pos[mid]]
    if mid.size < 2:
        raise ParameterDomainError("too few nonzero points to fit a decay rate")
    slope, intercept = np.polyfit(t[mid], y[mid], 1)
    if math.isfinite(log_bound) and math.isfinite(eta):
        viol = float(np.max(y[pos] - (log_bound + eta * t[pos])))
    else:
        viol = float("nan")
    return DecayFit(window, float(slope), float(intercept), viol, eta, log_bound)


def _difference_decay(spec, ou, p1, p2, rho, T, params, side, direct_window):
    params = params or LPParams()
    eta = params.eta_for(spec, side)
    w = EtaWeights(eta, ou, side)
    own1 = p1.x if side == "unstable" else p1.y
    own2 = p2.x if side == "unstable" else p2.y
    c0 = np.atleast_1d(own2 - own1).astype(float)
    lp = LPParams(eta, max(T, params.t_trunc), params.tol, params.max_iter, params.gap_override)
    _check_gap(spec, eta, lp.gap_override)
    base = base_orbit(spec, ou, p1, side, lp.t_trunc)
    phi, _, _, _, _ = _picard(c0, base, spec, w, lp.tol, lp.max_iter)
    u0, v0 = phi.at_zero
    other1 = p1.y if side == "unstable" else p1.x
    other2 = p2.y if side == "unstable" else p2.x
    member = float(np.linalg.norm(other1 + (v0 if side == "unstable" else u0) - other2))
    if member > 10 * lp.tol + 1e-3 * np.linalg.norm(c0):
        raise ParameterDomainError(
            f"points are not on a common {side} fiber (membership residual {member:.3g})")
    sl = ou.window_slice(-T, 0.0) if side == "unstable" else ou.window_slice(0.0, T)
    lo = base.times.size - (sl.stop - sl.start) if side == "unstable" else 0
    hi = lo + (sl.stop - sl.start)
    times = base.times[lo:hi]
    norms = phi.pointwise_norm()[lo:hi]
    log_bound = (math.log(np.linalg.norm(c0) / (1 - rho))
                 if rho < 1 and np.linalg.norm(c0) > 0 else float("nan"))
    fit = fit_decay(times, norms, base.I[lo:hi], eta, log_bound)
    mismatch = float("nan")
    if direct_window > 0 and np.linalg.norm(c0) > 0:
        end = -direct_window if side == "unstable" else direct_window
        o1 = integrate_rde(spec, ou, p1, 0.0, end).ascending()
        o2 = integrate_rde(spec, ou, p2, 0.0, end).ascending()
        dn = np.linalg.norm(o2.x - o1.x, axis=-1) + np.linalg.norm(o2.y - o1.y, axis=-1)
        k = min(o1.times.size, norms.size)
        dn = dn[-k:] if side == "unstable" else dn[:k]
        ref = norms[-k:] if side == "unstable" else norms[:k]
        scale = max(np.max(np.abs(o1.x)) + np.max(np.abs(o1.y)), 1.0)
        mismatch = float(np.max(np.abs(dn - ref)) / scale)
    return DecayFit(fit.window, fit.slope, fit.intercept, fit.max_violation, eta,
                    log_bound, mismatch)


def backward_decay_check(spec: SystemSpec, ou: OuRealization, p1: State, p2: State,
                         rho: float, T: float, params: LPParams | None = None,
                         direct_window: float = 5.0) -> DecayFit:
    """Backward exponential approach of two unstable-fiber mates.

    The difference orbit on ``[-T, 0]`` is the Lyapunov-Perron fixed point
    around the orbit of ``p1`` with ``u0 = x2 - x1``; integrating the
    equation backward directly is unstable in the contracting block, so it
    is only used as a cross-check over ``[-direct_window, 0]``.

    The bound line is ``log(|u0| / (1 - rho)) + eta t``.

    Raises
    ------
    ParameterDomainError
        ``p2`` is not on the fiber through ``p1``.
    DivergenceError
        The direct cross-check blew up; ``time`` holds the attained horizon.
    """
    if np.array_equal(p1.x, p2.x) and np.array_equal(p1.y, p2.y):
        return DecayFit((-T, 0.0), 0.0, -math.inf, -math.inf)
    return _difference_decay(spec, ou, p1, p2, rho, T, params, "unstable", direct_window)


def forward_decay_check(spec: SystemSpec, ou: OuRealization, p1: State, p2: State,
                        rho: float, T: float, params: LPParams | None = None,
                        direct_window: float = 5.0) -> DecayFit:
    """Forward exponential approach of two stable-fiber mates (mirror of the above)."""
    if np.array_equal(p1.x, p2.x) and np.array_equal(p1.y, p2.y):
        return DecayFit((0.0, T), 0.0, -math.inf, -math.inf)
    return _difference_decay(spec, ou, p1, p2, rho, T, params, "stable", direct_window)


def invariance_residual(spec: SystemSpec, ou: OuRealization, base: State, fiber_point: State,
                        tau: float, params: LPParams | None = None,
                        membership_tol: float | None = None) -> float:
    """Distance of a flowed fiber point from the fiber of the flowed base.

    Both points are flowed by ``tau`` under ``omega``; the unstable fiber of
    the flowed base is recomputed at ``theta_tau omega`` and evaluated at
    the flowed point's unstable coordinate.
    """
    params = params or LPParams()
    tol = 10 * params.tol if membership_tol is None else membership_tol
    fib = unstable_fiber(spec, ou, base, fiber_point.x[None, :], params)
    member = float(np.linalg.norm(fib.values[0] - fiber_point.y))
    if member > tol:
        raise ParameterDomainError(
            f"fiber_point is not on the fiber of base (residual {member:.3g} > {tol:.3g})")
    if tau == 0:
        return member
    b_tau = integrate_rde(spec, ou, base, 0.0, tau).final
    p_tau = integrate_rde(spec, ou, fiber_point, 0.0, tau).final
    fib_tau = unstable_fiber(spec, ou.shift(tau), b_tau, p_tau.x[None, :], params)
    return float(np.linalg.norm(fib_tau.values[0] - p_tau.y))


def _spread(d):
    d = np.asarray(d, dtype=float)
    mean = d.mean(axis=0)
    return float(np.max(np.linalg.norm(d - mean, axis=-1))), mean


def parallelism_check(fiber1: FiberGraph, fiber2: FiberGraph, manifold: ManifoldGraph,
                      tol: float = 1e-3) -> OracleReport:
    """Constant-difference test: ``l1 - h``, ``l2 - h`` and ``l1 - l2`` constant in xi.

    ``computed`` holds the three maximal deviations from their means;
    ``details`` holds the constants themselves.
    """
    for f in (fiber1, fiber2):
        if f.samples.shape != manifold.samples.shape or not np.array_equal(f.samples,
                                                                         manifold.samples):
            raise GridRangeError("fibers and manifold must share the same sample set")
        if f.omega_tag != manifold.omega_tag:
            raise GridRangeError("fibers and manifold belong to different realizations")
    dev1, p = _spread(fiber1.values - manifold.values)
    dev2, q = _spread(fiber2.values - manifold.values)
    dev12, pq = _spread(fiber1.values - fiber2.values)
    return OracleReport.compare("parallelism", [dev1, dev2, dev12], np.zeros(3), tol,
                                p=p.tolist(), q=q.tolist(), p_minus_q=pq.tolist())


def manifold_coincidence(fiber: FiberGraph, manifold: ManifoldGraph,
                         tol: float = 1e-3) -> OracleReport:
    """Pointwise comparison of a fiber with the manifold on shared samples."""
    if not np.array_equal(fiber.samples, manifold.samples):
        raise GridRangeError("fiber and manifold must share the same sample set")
    return OracleReport.compare("manifold_coincidence", fiber.values, manifold.values, tol)


def example5_oracle(x0, y0, xi, epsilon=1.0):
    """Closed forms of the ``example5`` preset with coupling ``epsilon * |x|``.

    Returns ``(l, h)`` with ``l = y0 + epsilon/2 (|xi| - |x0|)`` the unstable
    fiber through ``(x0, y0)`` and ``h = epsilon/2 |xi|`` the unstable manifold.

    >>> example5_oracle(1.0, 0.0, 2.0)
    (0.5, 1.0)
    """
    half = 0.5 * epsilon
    l = y0 + half * (np.abs(xi) - np.abs(x0))
    h = half * np.abs(xi)
    if np.ndim(l) == 0:
        return float(l), float(h)
    return l, h


def example5_fiber_report(fiber: FiberGraph, epsilon: float, tol: float = 1e-3) -> OracleReport:
    if fiber.side == "stable":
        expected = np.broadcast_to(fiber.base_point.x, fiber.values.shape)
        return OracleReport.compare("stable_fiber", fiber.values, expected, tol)
    x0, y0 = fiber.base_point.x[0], fiber.base_point.y[0]
    expected, _ = example5_oracle(x0, y0, fiber.samples, epsilon)
    return OracleReport.compare("unstable_fiber", fiber.values, expected, tol)


def example5_manifold_report(manifold: ManifoldGraph, epsilon: float,
                             tol: float = 1e-3) -> OracleReport:
    _, expected = example5_oracle(0.0, 0.0, manifold.samples, epsilon)
    return OracleReport.compare("unstable_manifold", manifold.values, expected, tol,
                                h_at_origin=manifold.value_at_origin())


def _random_orbits(rng, times, integral, eta, batch, n, m, side):
    # random members of C_eta: weight^{-1} times bounded oscillating profiles
    env = np.exp(eta * times + integral)[:, None, None]
    freq = rng.uniform(0.1, 3.0, (1, batch, 1))
    phase = rng.uniform(0, 2 * np.pi, (1, batch, 1))
    t = times[:, None, None]
    u = env * rng.normal(size=(1, batch, n)) * np.cos(freq * t + phase)
    v = env * rng.normal(size=(1, batch, m)) * np.sin(0.7 * freq * t - phase)
    return DifferenceOrbit(times, u, v, side)


def contraction_ratios(spec: SystemSpec, ou: OuRealization, base_point: State, eta: float,
                       n_pairs: int = 50, seed: int = 0, t_trunc: float = 40.0,
                       side: str = "unstable") -> np.ndarray:
    """``|J phi1 - J phi2| / |phi1 - phi2|`` for random pairs in ``C_eta``."""
    rng = np.random.default_rng(seed)
    w = EtaWeights(eta, ou, side)
    base = base_orbit(spec, ou, base_point, side, t_trunc)
    I = base.I
    p1 = _random_orbits(rng, base.times, I, eta, n_pairs, spec.n, spec.m, side)
    p2 = _random_orbits(rng, base.times, I, eta, n_pairs, spec.n, spec.m, side)
    dim = spec.n if side == "unstable" else spec.m
    c0 = rng.normal(size=(n_pairs, dim))
    j1 = lp_operator(p1, c0, base, spec, w)
    j2 = lp_operator(p2, c0, base, spec, w)
    return np.asarray(weighted_norm(j1 - j2, w)) / np.asarray(weighted_norm(p1 - p2, w))


def continuous_dependence_ratios(spec: SystemSpec, ou: OuRealization, base_point: State,
                                 eta: float, n_pairs: int = 50, seed: int = 0,
                                 t_trunc: float = 40.0, tol: float = 1e-10,
                                 side: str = "unstable") -> np.ndarray:
    """``|phi*(c0) - phi*(c0')| / |c0 - c0'|`` for random initial-difference pairs."""
    rng = np.random.default_rng(seed)
    w = EtaWeights(eta, ou, side)
    base = base_orbit(spec, ou, base_point, side, t_trunc)
    dim = spec.n if side == "unstable" else spec.m
    a = rng.normal(scale=2.0, size=(n_pairs, dim))
    b = rng.normal(scale=2.0, size=(n_pairs, dim))
    phi, *_ = _picard(np.concatenate([a, b]), base, spec, w, tol, 200)
    d = DifferenceOrbit(phi.times, phi.u[:, :n_pairs] - phi.u[:, n_pairs:],
                        phi.v[:, :n_pairs] - phi.v[:, n_pairs:], side)
    return np.asarray(weighted_norm(d, w)) / np.linalg.norm(a - b, axis=-1)


def picard_ratios(residuals, floor: float = 1e-13) -> np.ndarray:
    """Successive residual ratios, ignoring steps that start below ``floor``."""
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        return np.zeros(0)
    prev, nxt = r[:-1], r[1:]
    keep = prev > floor
    return nxt[keep] / prev[keep]


def stable_law_ks(samples, params: StableParams, dt: float = 1.0):
    """KS test of increments against scipy's independent stable-law implementation."""
    scale = params.scale * dt ** (1.0 / params.alpha)
    dist = stats.levy_stable(params.alpha, 0.0, loc=0.0, scale=scale)
    return stats.kstest(np.asarray(samples), dist.cdf)


def symmetry_ks(samples):
    """Two-sample KS test of ``X`` against ``-X``."""
    x = np.asarray(samples, dtype=float)
    return stats.ks_2samp(x, -x)


def stationarity_ks(values_a, values_b):
    """Two-sample KS test of the OU marginals at two different times."""
    return stats.ks_2samp(np.asarray(values_a), np.asarray(values_b))
