"""Lyapunov-Perron construction of unstable/stable fibers and the unstable manifold.

A point ``(xi, l)`` lies on the unstable fiber through ``(x0, y0)`` iff the
difference ``phi = (u, v)`` of the two orbits stays in the weighted space
``C_eta^-`` (finite ``sup_{t<=0} exp(-eta t - I(t)) (|u| + |v|)``).  Such a
``phi`` is the fixed point of

    J(phi)_u(t) = e^{At + I(t)} u0 + int_0^t e^{A(t-s) + I(t) - I(s)} dF(s) ds
    J(phi)_v(t) = int_{-inf}^t e^{B(t-s) + I(t) - I(s)} dG(s) ds

with ``dF``, ``dG`` the nonlinearity increments along the base orbit, and
``l(xi) = y0 + v(0)``.  The stable side mirrors this on ``t >= 0``.

All integrals use the composite trapezoidal rule on the realization grid.
The scalar weights ``e^{I(t) - I(s)}`` are factored out, which leaves a
time-invariant matrix kernel; the resulting linear recurrences are run per
eigenmode with :func:`scipy.signal.lfilter`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.signal import lfilter

from .errors import DivergenceError, GridRangeError, NonConvergenceError, ParameterDomainError
from .ou import OuRealization
from .rds import OrbitSegment, State, SystemSpec, integrate_rde, make_conjugated_fields

__all__ = [
    "gap_condition",
    "fiber_lipschitz_bound",
    "LPParams",
    "EtaWeights",
    "DifferenceOrbit",
    "BaseOrbit",
    "FiberGraph",
    "ManifoldGraph",
    "weighted_norm",
    "base_orbit",
    "lp_operator",
    "initial_iterate",
    "solve_fixed_point",
    "unstable_fiber",
    "unstable_manifold",
    "stable_fiber",
    "transform_fiber_to_original",
]

SIDES = ("unstable", "stable")


def gap_condition(a: float, b: float, K: float, eta: float):
    """``rho = K/(a - eta) + K/(eta - b)`` and whether ``rho < 1``."""
    if not (b < eta < a):
        raise ParameterDomainError(f"eta={eta} must lie strictly between b={b} and a={a}")
    rho = K / (a - eta) + K / (eta - b)
    return rho, rho < 1.0


def fiber_lipschitz_bound(a: float, b: float, K: float, eta: float,
                          side: str = "unstable") -> float:
    """Lipschitz bound of the fiber graph map.

    ``K / ((eta - b)(1 - rho))`` on the unstable side and
    ``K / ((a - eta)(1 - rho))`` on the stable side.
    """
    rho, holds = gap_condition(a, b, K, eta)
    if not holds:
        raise ParameterDomainError(f"gap condition violated: rho={rho:.6g} >= 1")
    gap = (eta - b) if side == "unstable" else (a - eta)
    return K / (gap * (1.0 - rho))


@dataclass(frozen=True)
class LPParams:
    """Numerical parameters of a Lyapunov-Perron solve.

    ``eta=None`` selects ``a/2`` on the unstable side and ``b/2`` on the
    stable side.  ``gap_override`` lets the iteration run when the gap
    condition fails (with a warning) instead of refusing.
    """

    eta: float | None = None
    t_trunc: float = 40.0
    tol: float = 1e-6
    max_iter: int = 200
    gap_override: bool = False

    def __post_init__(self):
        if not (self.t_trunc > 0 and self.tol > 0 and self.max_iter >= 1):
            raise ParameterDomainError("t_trunc, tol and max_iter must be positive")

    def eta_for(self, spec: SystemSpec, side: str) -> float:
        if self.eta is not None:
            return float(self.eta)
        return 0.5 * spec.a if side == "unstable" else 0.5 * spec.b


@dataclass(frozen=True)
class EtaWeights:
    """Exponential weight ``exp(-eta t - I(t))`` of the space ``C_eta^{+/-}``."""

    eta: float
    ou: OuRealization
    side: str = "unstable"

    def __post_init__(self):
        if self.side not in SIDES:
            raise ParameterDomainError(f"side must be one of {SIDES}")
        if self.side == "unstable" and self.eta < 0:
            raise ParameterDomainError("unstable-side weights need eta >= 0")
        if self.side == "stable" and self.eta > 0:
            raise ParameterDomainError("stable-side weights need eta <= 0")

    def check(self, spec: SystemSpec):
        if not (spec.b < self.eta < spec.a):
            raise ParameterDomainError(
                f"eta={self.eta} must lie strictly between b={spec.b} and a={spec.a}")

    def window(self, t_trunc: float):
        return (-t_trunc, 0.0) if self.side == "unstable" else (0.0, t_trunc)

    def values(self, sl: slice) -> np.ndarray:
        t = self.ou.times[sl]
        return np.exp(-self.eta * t - self.ou.integral_values[sl])


@dataclass(frozen=True, eq=False)
class DifferenceOrbit:
    """Difference ``(u, v)`` of two orbits on an ascending window.

    ``u`` has shape ``(N, *batch, n)`` and ``v`` shape ``(N, *batch, m)``.
    """

    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    side: str = "unstable"
    iterations: int = 0
    residuals: tuple = ()

    @property
    def zero_index(self) -> int:
        return self.times.size - 1 if self.side == "unstable" else 0

    @property
    def at_zero(self):
        k = self.zero_index
        return self.u[k], self.v[k]

    def pointwise_norm(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=-1) + np.linalg.norm(self.v, axis=-1)

    def __sub__(self, other):
        return DifferenceOrbit(self.times, self.u - other.u, self.v - other.v, self.side)

    def scaled(self, c):
        return DifferenceOrbit(self.times, c * self.u, c * self.v, self.side)


def _window_slice(ou: OuRealization, times: np.ndarray) -> slice:
    if times.size < 2:
        raise GridRangeError("orbit window must hold at least two nodes")
    sl = ou.window_slice(float(times[0]), float(times[-1]))
    if sl.stop - sl.start != times.size or abs((times[1] - times[0]) - ou.dt) > 1e-9 * ou.dt:
        raise GridRangeError("orbit window does not match the realization grid")
    return sl


def weighted_norm(orbit: DifferenceOrbit, w: EtaWeights):
    """``sup_t exp(-eta t - I(t)) (|u(t)| + |v(t)|)`` over the orbit window.

    Returns a float, or an array over the batch axes.
    """
    sl = _window_slice(w.ou, orbit.times)
    wt = w.values(sl).reshape((-1,) + (1,) * (orbit.u.ndim - 2))
    out = np.max(wt * orbit.pointwise_norm(), axis=0)
    return float(out) if np.ndim(out) == 0 else out


class _Kernel:
    """Trapezoidal convolution with a time-invariant matrix exponential.

    ``convolve(q)[k] ~ int_{t_0}^{t_k} e^{M (t_k - s)} q(s) ds`` on a uniform
    grid, with ``q`` of shape ``(N, *batch, d)``.
    """

    def __init__(self, M: np.ndarray, dt: float):
        self.M = M
        self.dt = dt
        self.d = M.shape[0]
        mu, V = np.linalg.eig(M)
        self.modal = np.linalg.cond(V) < 1e8
        if self.modal:
            self.mu, self.V, self.Vinv = mu, V, np.linalg.inv(V)
        self.E = expm(M * dt)

    def powers(self, x0: np.ndarray, t: np.ndarray) -> np.ndarray:
        """``e^{M t_k} x0`` for every entry of ``t``; ``x0`` is ``(*batch, d)``."""
        if self.modal:
            c = x0 @ self.Vinv.T
            ex = np.exp(np.multiply.outer(t, self.mu))
            ex = ex.reshape((t.size,) + (1,) * (x0.ndim - 1) + (self.d,))
            out = (ex * c) @ self.V.T
            return out.real if np.isrealobj(self.M) else out
        return np.stack([x0 @ expm(self.M * tk).T for tk in t])

    def convolve(self, q: np.ndarray) -> np.ndarray:
        h = self.dt
        if self.modal:
            p = q @ self.Vinv.T
            out = np.empty_like(p)
            for i, mu in enumerate(self.mu):
                lam = np.exp(mu * h)
                x = p[..., i]
                zi = (-0.5 * h * x[0])[None, ...]
                out[..., i], _ = lfilter([0.5 * h, 0.5 * h * lam], [1.0, -lam], x, axis=0, zi=zi)
            res = out @ self.V.T
            return res.real if np.isrealobj(self.M) and np.isrealobj(q) else res
        out = np.zeros_like(q)
        Et = self.E.T
        for k in range(q.shape[0] - 1):
            out[k + 1] = (out[k] + 0.5 * h * q[k]) @ Et + 0.5 * h * q[k + 1]
        return out


@dataclass(frozen=True, eq=False)
class BaseOrbit:
    """Base orbit on an ascending window with its realization data."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    I: np.ndarray
    side: str


def base_orbit(spec: SystemSpec, ou: OuRealization, base_point: State, side: str,
               t_trunc: float, zero: bool = False) -> BaseOrbit:
    """Orbit of ``base_point`` over ``[-t_trunc, 0]`` (unstable) or ``[0, t_trunc]``.

    With ``zero=True`` the orbit is the equilibrium at the origin and no
    integration is done; this is the base used for the unstable manifold.
    """
    lo, hi = (-t_trunc, 0.0) if side == "unstable" else (0.0, t_trunc)
    sl = ou.window_slice(lo, hi)
    times = ou.times[sl]
    if zero:
        xs = np.zeros((times.size, spec.n))
        ys = np.zeros((times.size, spec.m))
    else:
        orbit = integrate_rde(spec, ou, base_point, 0.0, lo if side == "unstable" else hi)
        orbit = orbit.ascending()
        xs, ys = orbit.x, orbit.y
    return BaseOrbit(times, xs, ys, ou.z_values[sl], ou.integral_values[sl], side)


class _Operator:
    """The map ``J`` for one base orbit, batched over initial differences."""

    def __init__(self, spec: SystemSpec, base: BaseOrbit, dt: float, batch_ndim: int):
        self.spec = spec
        self.base = base
        self.side = base.side
        self.F, self.G = make_conjugated_fields(spec)
        self.kA_rev = _Kernel(-spec.A, dt)
        self.kA = _Kernel(spec.A, dt)
        self.kB = _Kernel(spec.B, dt)
        self.kB_rev = _Kernel(-spec.B, dt)
        pad = (1,) * batch_ndim
        N = base.times.size
        self.bx = base.x.reshape((N,) + pad + (spec.n,)) if base.x.ndim == 2 else base.x
        self.by = base.y.reshape((N,) + pad + (spec.m,)) if base.y.ndim == 2 else base.y
        self.zb = base.z.reshape((N,) + pad)
        self.eI = np.exp(base.I).reshape((N,) + pad + (1,))
        self.emI = np.exp(-base.I).reshape((N,) + pad + (1,))
        self.F0 = self.F(self.bx, self.by, self.zb)
        self.G0 = self.G(self.bx, self.by, self.zb)
        self.times = base.times

    def free_part(self, c0: np.ndarray) -> np.ndarray:
        """``e^{Mt + I(t)} c0`` (M = A unstable side, B stable side)."""
        k = self.kA if self.side == "unstable" else self.kB
        return k.powers(c0, self.times) * self.eI

    def apply(self, u: np.ndarray, v: np.ndarray, c0: np.ndarray):
        dF = self.F(self.bx + u, self.by + v, self.zb) - self.F0
        dG = self.G(self.bx + u, self.by + v, self.zb) - self.G0
        # identically zero sources (e.g. f = 0) need no quadrature
        if dF.any():
            # e^{I} int_t^0 e^{A(t-s)} e^{-I(s)} dF(s) ds, run from t = 0 backwards
            Uf = -self.eI * self.kA_rev.convolve((self.emI * dF)[::-1])[::-1]
        else:
            Uf = np.zeros(np.broadcast_shapes(dF.shape, self.eI.shape))
        if dG.any():
            Vg = self.eI * self.kB.convolve(self.emI * dG)
        else:
            Vg = np.zeros(np.broadcast_shapes(dG.shape, self.eI.shape))
        if self.side == "unstable":
            return self.free_part(c0) + Uf, Vg
        return Uf, self.free_part(c0) + Vg


def _as_batch(c0, dim):
    c0 = np.asarray(c0, dtype=float)
    if c0.ndim == 0:
        c0 = c0[None]
    if c0.shape[-1] != dim:
        raise ParameterDomainError(f"initial difference must have last axis {dim}, got {c0.shape}")
    return c0


def _orbit_from_base(base_like) -> BaseOrbit:
    if isinstance(base_like, BaseOrbit):
        return base_like
    raise ParameterDomainError("base must be a BaseOrbit (see base_orbit())")


def lp_operator(phi: DifferenceOrbit, c0, base: BaseOrbit, spec: SystemSpec,
                w: EtaWeights) -> DifferenceOrbit:
    """One application of ``J`` to ``phi``.

    ``c0`` is the prescribed initial difference: ``u(0)`` on the unstable side,
    ``v(0)`` on the stable side.
    """
    base = _orbit_from_base(base)
    if phi.side != base.side or w.side != base.side:
        raise GridRangeError("orbit, base and weights must be on the same side")
    _window_slice(w.ou, phi.times)
    if phi.times.size != base.times.size or phi.times[0] != base.times[0]:
        raise GridRangeError("difference orbit and base orbit windows differ")
    dim = spec.n if base.side == "unstable" else spec.m
    c0 = _as_batch(c0, dim)
    op = _Operator(spec, base, w.ou.dt, c0.ndim - 1)
    u, v = op.apply(phi.u, phi.v, c0)
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise DivergenceError("non-finite values in Lyapunov-Perron operator")
    return DifferenceOrbit(phi.times, u, v, phi.side)


def initial_iterate(c0, base: BaseOrbit, spec: SystemSpec, w: EtaWeights) -> DifferenceOrbit:
    """``(e^{At+I}u0, 0)`` on the unstable side, ``(0, e^{Bt+I}v0)`` on the stable side."""
    dim = spec.n if base.side == "unstable" else spec.m
    c0 = _as_batch(c0, dim)
    op = _Operator(spec, base, w.ou.dt, c0.ndim - 1)
    free = op.free_part(c0)
    N = base.times.size
    shape_other = (N,) + c0.shape[:-1] + ((spec.m,) if base.side == "unstable" else (spec.n,))
    other = np.zeros(shape_other)
    if base.side == "unstable":
        return DifferenceOrbit(base.times, free, other, base.side)
    return DifferenceOrbit(base.times, other, free, base.side)


def _check_gap(spec: SystemSpec, eta: float, gap_override: bool):
    rho, holds = gap_condition(spec.a, spec.b, spec.K, eta)
    if not holds:
        msg = (f"gap condition violated for a={spec.a}, b={spec.b}, K={spec.K}, "
               f"eta={eta}: rho={rho:.6g} >= 1")
        if not gap_override:
            raise ParameterDomainError(msg)
        warnings.warn(msg + "; iterating anyway (gap_override)", RuntimeWarning, stacklevel=3)
    return rho, holds


def _picard(c0, base: BaseOrbit, spec: SystemSpec, w: EtaWeights, tol: float, max_iter: int):
    dim = spec.n if base.side == "unstable" else spec.m
    c0 = _as_batch(c0, dim)
    op = _Operator(spec, base, w.ou.dt, c0.ndim - 1)
    phi = initial_iterate(c0, base, spec, w)
    wt = w.values(_window_slice(w.ou, base.times)).reshape((-1,) + (1,) * (c0.ndim - 1))
    history = []
    residual = np.full(c0.shape[:-1], np.inf)
    it = 0
    while it < max_iter:
        u, v = op.apply(phi.u, phi.v, c0)
        it += 1
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise DivergenceError(f"non-finite iterate at Picard step {it}")
        diff = np.linalg.norm(u - phi.u, axis=-1) + np.linalg.norm(v - phi.v, axis=-1)
        residual = np.max(wt * diff, axis=0)
        history.append(float(np.max(residual)))
        phi = DifferenceOrbit(base.times, u, v, base.side)
        if history[-1] <= tol:
            break
    converged = residual <= tol
    return phi, it, history, residual, converged


def solve_fixed_point(c0, base: BaseOrbit, spec: SystemSpec, w: EtaWeights,
                      tol: float = 1e-6, max_iter: int = 200,
                      gap_override: bool = False) -> DifferenceOrbit:
    """Picard iteration of ``J`` from :func:`initial_iterate`.

    Stops once ``||J(phi) - phi||`` (weighted norm, max over the batch) is at
    most ``tol`` and returns the last image ``J(phi)``; ``residuals`` holds
    the whole history.

    Raises
    ------
    ParameterDomainError
        Gap condition violated and ``gap_override`` not set.
    NonConvergenceError
        ``max_iter`` reached; carries the residual history.
    """
    w.check(spec)
    rho, holds = _check_gap(spec, w.eta, gap_override)
    phi, it, history, residual, converged = _picard(c0, base, spec, w, tol, max_iter)
    if not np.all(converged):
        raise NonConvergenceError(
            f"Picard iteration not converged after {it} steps (residual {history[-1]:.3g})",
            history)
    if holds:
        c0a = _as_batch(c0, spec.n if base.side == "unstable" else spec.m)
        bound = np.linalg.norm(c0a, axis=-1) / (1.0 - rho)
        norm = weighted_norm(phi, w)
        if np.any(norm > bound * (1 + 0.05) + tol):
            warnings.warn("fixed point exceeds the a-priori bound |c0|/(1-rho)",
                          RuntimeWarning, stacklevel=2)
    return DifferenceOrbit(phi.times, phi.u, phi.v, phi.side, it, tuple(history))


@dataclass(frozen=True, eq=False)
class FiberGraph:
    """Sampled fiber ``{(xi, l(xi))}`` (unstable) or ``{(l(zeta), zeta)}`` (stable).

    ``samples`` holds the graph variable (``(k, n)`` unstable, ``(k, m)``
    stable) and ``values`` the graph map.  ``self_residual`` is
    ``|l(base graph coordinate) - base other coordinate|``.
    """

    base_point: State
    omega_tag: str
    samples: np.ndarray
    values: np.ndarray
    side: str
    iterations: int
    residuals: np.ndarray
    converged: np.ndarray
    self_residual: float
    eta: float
    rho: float
    frame: str = "transformed"

    def lipschitz_estimate(self) -> float:
        """Largest slope between consecutive samples (in the given order)."""
        ds = np.linalg.norm(np.diff(self.samples, axis=0), axis=-1)
        dl = np.linalg.norm(np.diff(self.values, axis=0), axis=-1)
        ok = ds > 0
        return float(np.max(dl[ok] / ds[ok])) if np.any(ok) else 0.0


@dataclass(frozen=True, eq=False)
class ManifoldGraph:
    """Sampled unstable manifold ``{(xi, h(xi))}``."""

    omega_tag: str
    samples: np.ndarray
    values: np.ndarray
    iterations: int
    residuals: np.ndarray
    converged: np.ndarray
    eta: float
    rho: float
    frame: str = "transformed"

    def value_at_origin(self) -> float:
        """``|h(0)|``, computed from a dedicated solve."""
        return self._h0

    @property
    def lipschitz_estimate(self) -> float:
        ds = np.linalg.norm(np.diff(self.samples, axis=0), axis=-1)
        dl = np.linalg.norm(np.diff(self.values, axis=0), axis=-1)
        ok = ds > 0
        return float(np.max(dl[ok] / ds[ok])) if np.any(ok) else 0.0


def _samples_array(samples, dim):
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1 and dim == 1:
        s = s[:, None]
    if s.ndim != 2 or s.shape[1] != dim:
        raise ParameterDomainError(f"samples must have shape (k, {dim}), got {s.shape}")
    return s


def _fiber(spec, ou, base_point, samples, params, side, omega_tag):
    params = params or LPParams()
    eta = params.eta_for(spec, side)
    w = EtaWeights(eta, ou, side)
    w.check(spec)
    rho, _ = _check_gap(spec, eta, params.gap_override)
    graph_dim = spec.n if side == "unstable" else spec.m
    s = _samples_array(samples, graph_dim)
    own = base_point.x if side == "unstable" else base_point.y
    other = base_point.y if side == "unstable" else base_point.x
    all_c0 = np.vstack([s - own, np.zeros((1, graph_dim))])
    base = base_orbit(spec, ou, base_point, side, params.t_trunc)
    phi, it, history, residual, converged = _picard(all_c0, base, spec, w, params.tol,
                                                    params.max_iter)
    u0, v0 = phi.at_zero
    vals = other + (v0 if side == "unstable" else u0)
    return FiberGraph(base_point, omega_tag, s, vals[:-1], side, it, residual[:-1],
                      converged[:-1], float(np.linalg.norm(vals[-1] - other)), eta, rho)


def unstable_fiber(spec: SystemSpec, ou: OuRealization, base_point: State, xi_samples,
                   params: LPParams | None = None, omega_tag: str = "") -> FiberGraph:
    """Graph map ``xi -> l(xi, (x0, y0), omega)`` of the unstable fiber.

    ``l(xi) = y0 + int_{-inf}^0 e^{-Bs - I(s)} dG(s) ds`` with the fixed point
    for ``u0 = xi - x0``; all samples are solved as one batch.
    """
    return _fiber(spec, ou, base_point, xi_samples, params, "unstable", omega_tag)


def stable_fiber(spec: SystemSpec, ou: OuRealization, base_point: State, zeta_samples,
                 params: LPParams | None = None, omega_tag: str = "") -> FiberGraph:
    """Graph map ``zeta -> l(zeta, (x0, y0), omega)`` of the stable fiber.

    Solved directly in forward time on ``[0, t_trunc]``:
    ``l(zeta) = x0 - int_0^inf e^{-As - I(s)} dF(s) ds`` for ``v0 = zeta - y0``.
    """
    return _fiber(spec, ou, base_point, zeta_samples, params, "stable", omega_tag)


def unstable_manifold(spec: SystemSpec, ou: OuRealization, xi_samples,
                      params: LPParams | None = None, omega_tag: str = "") -> ManifoldGraph:
    """Graph ``xi -> h(xi, omega)`` of the random unstable manifold.

    Solves the coupled integral system for ``(x(t; xi), y(t; xi))`` on
    ``t <= 0`` (the Lyapunov-Perron system around the zero orbit), then
    ``h(xi) = int_{-inf}^0 e^{-Bs - I(s)} G ds``.
    """
    params = params or LPParams()
    eta = params.eta_for(spec, "unstable")
    w = EtaWeights(eta, ou, "unstable")
    w.check(spec)
    rho, _ = _check_gap(spec, eta, params.gap_override)
    s = _samples_array(xi_samples, spec.n)
    c0 = np.vstack([s, np.zeros((1, spec.n))])
    base = base_orbit(spec, ou, State(np.zeros(spec.n), np.zeros(spec.m)), "unstable",
                      params.t_trunc, zero=True)
    phi, it, history, residual, converged = _picard(c0, base, spec, w, params.tol,
                                                    params.max_iter)
    _, v0 = phi.at_zero
    graph = ManifoldGraph(omega_tag, s, v0[:-1], it, residual[:-1], converged[:-1], eta, rho)
    object.__setattr__(graph, "_h0", float(np.linalg.norm(v0[-1])))
    return graph


def transform_fiber_to_original(fiber: FiberGraph, z0: float) -> FiberGraph:
    """Pull a transformed-frame fiber back with ``T^{-1}(omega, .)``.

    Graph points ``(xi, l(xi))`` become ``(e^{z0} xi, e^{z0} l(xi))``, which
    is the original-frame graph ``xi -> e^{z0} l(e^{-z0} xi, e^{-z0} p0)``
    through the original base point ``p0 = e^{z0} (x0, y0)``.
    """
    e = math.exp(z0)
    bp = State(fiber.base_point.x * e, fiber.base_point.y * e)
    return FiberGraph(bp, fiber.omega_tag, fiber.samples * e, fiber.values * e, fiber.side,
                      fiber.iterations, fiber.residuals, fiber.converged,
                      fiber.self_residual * e, fiber.eta, fiber.rho, "original")
