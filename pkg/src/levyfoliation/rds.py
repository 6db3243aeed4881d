"""Conjugation of the Marcus system to a random ODE, and its integrator.

The stochastic system

    dx = (A x + f(x, y)) dt + x <> dL,    dy = (B y + g(x, y)) dt + y <> dL

is mapped by ``T(omega, x, y) = e^{-z(omega)} (x, y)`` to the random ODE

    x' = A x + F(x, y, z) + z x,          y' = B y + G(x, y, z) + z y

with ``F = e^{-z} f(e^{z} x, e^{z} y)`` and ``G`` alike.  The integrator is an
exponential Euler scheme whose scalar noise factor is taken from the running
integral ``I`` of the realization, so the linear part agrees with the
exponential weights used by the Lyapunov-Perron operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DivergenceError, GridRangeError, ParameterDomainError
from .levy_path import SamplePath
from .nonlinear import AbsCoupling, Nonlinearity, Zero
from .ou import OuRealization

__all__ = [
    "SystemSpec",
    "State",
    "OrbitSegment",
    "example5_system",
    "transform",
    "inverse_transform",
    "make_conjugated_fields",
    "integrate_rde",
    "solve_original",
    "marcus_linear_solution",
    "cocycle_residual",
]

Z_RULES = ("average", "left")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Two-block system with exponential dichotomy ``b < 0 < a``.

    ``f`` and ``g`` must be vectorized over leading axes and vanish at the
    origin.  ``K`` defaults to the larger of their declared Lipschitz
    constants.  Construction validates the hypotheses numerically; pass
    ``validate=False`` to skip the sampled checks.
    """

    A: np.ndarray
    B: np.ndarray
    a: float
    b: float
    f: Nonlinearity
    g: Nonlinearity
    K: float | None = None
    alpha: float = 1.5
    name: str = ""
    validate: bool = field(default=True, repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
            raise ParameterDomainError("A and B must be square")
        if not (self.b < 0.0 < self.a):
            raise ParameterDomainError(f"dichotomy rates need b < 0 < a, got a={self.a}, b={self.b}")
        if not (1.0 < self.alpha < 2.0):
            raise ParameterDomainError(f"alpha must lie in (1, 2), got {self.alpha}")
        if self.K is None:
            object.__setattr__(self, "K", float(max(self.f.lipschitz, self.g.lipschitz)))
        if self.K < 0:
            raise ParameterDomainError("K must be nonnegative")
        x0, y0 = np.zeros(self.n), np.zeros(self.m)
        fx, gy = np.asarray(self.f(x0, y0)), np.asarray(self.g(x0, y0))
        if fx.shape != (self.n,) or gy.shape != (self.m,):
            raise ParameterDomainError(
                f"f must map to R^{self.n} and g to R^{self.m}; got {fx.shape}, {gy.shape}")
        if np.any(fx != 0.0) or np.any(gy != 0.0):
            raise ParameterDomainError("f(0, 0) and g(0, 0) must vanish")
        if self.validate:
            self.check_lipschitz()
            self.check_dichotomy()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    def sampled_lipschitz(self, pairs: int = 2000, radius: float = 5.0, seed: int = 0):
        """Largest sampled difference quotient of ``f`` and ``g``."""
        rng = np.random.default_rng(seed)
        x1, x2 = rng.uniform(-radius, radius, (2, pairs, self.n))
        y1, y2 = rng.uniform(-radius, radius, (2, pairs, self.m))
        # Pairs at small separation probe the local slope.
        x2[: pairs // 2] = x1[: pairs // 2] + 1e-3 * rng.standard_normal((pairs // 2, self.n))
        y2[: pairs // 2] = y1[: pairs // 2] + 1e-3 * rng.standard_normal((pairs // 2, self.m))
        den = np.linalg.norm(x1 - x2, axis=-1) + np.linalg.norm(y1 - y2, axis=-1)
        qf = np.linalg.norm(self.f(x1, y1) - self.f(x2, y2), axis=-1) / den
        qg = np.linalg.norm(self.g(x1, y1) - self.g(x2, y2), axis=-1) / den
        return float(qf.max()), float(qg.max())

    def check_lipschitz(self, rtol: float = 1e-6):
        qf, qg = self.sampled_lipschitz()
        if max(qf, qg) > self.K * (1 + rtol) + 1e-12:
            raise ParameterDomainError(
                f"sampled Lipschitz quotient {max(qf, qg):.6g} exceeds K={self.K}")

    def check_dichotomy(self, rtol: float = 1e-9):
        """Verify ``|e^{At}x| <= e^{at}|x|`` (t <= 0) and ``|e^{Bt}y| <= e^{bt}|y|`` (t >= 0)."""
        A, B = self.A, self.B
        if _is_diagonal(A) and _is_diagonal(B):
            ok = np.diag(A).min() >= self.a * (1 - rtol) and np.diag(B).max() <= self.b * (1 - rtol)
            if not ok:
                raise ParameterDomainError("diagonal A/B violate the dichotomy rates")
            return
        rng = np.random.default_rng(1)
        for t in np.linspace(0.1, 5.0, 12):
            xs = rng.standard_normal((8, self.n))
            xs /= np.linalg.norm(xs, axis=1, keepdims=True)
            ys = rng.standard_normal((8, self.m))
            ys /= np.linalg.norm(ys, axis=1, keepdims=True)
            gx = np.linalg.norm(xs @ expm(-A * t).T, axis=1).max()
            gy = np.linalg.norm(ys @ expm(B * t).T, axis=1).max()
            if gx > math.exp(-self.a * t) * (1 + rtol) or gy > math.exp(self.b * t) * (1 + rtol):
                raise ParameterDomainError(
                    f"dichotomy check failed at t={t:.3g}: A or B does not match (a, b)")

    def step_matrices(self, h: float):
        """Cached ``(expm(A h), expm(B h))`` for a signed step ``h``."""
        key = ("step", float(h))
        if key not in self._cache:
            self._cache[key] = (expm(self.A * h), expm(self.B * h))
        return self._cache[key]


def _is_diagonal(M):
    return np.count_nonzero(M - np.diag(np.diag(M))) == 0


def example5_system(epsilon: float = 1.0, alpha: float = 1.5) -> SystemSpec:
    """Scalar system ``x' = x``, ``y' = -y + epsilon |x|`` with linear noise."""
    K = abs(epsilon)
    return SystemSpec(np.array([[1.0]]), np.array([[-1.0]]), 1.0, -1.0,
                      Zero(1), AbsCoupling(epsilon, 1, 1), K, alpha,
                      name=f"example5(epsilon={epsilon:g})")


@dataclass(frozen=True)
class State:
    """Pair ``(x, y)``; leading axes of ``x`` and ``y`` are batch axes."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", np.atleast_1d(x))
        object.__setattr__(self, "y", np.atleast_1d(y))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ParameterDomainError("state entries must be finite")

    def norm(self):
        return np.linalg.norm(self.x, axis=-1) + np.linalg.norm(self.y, axis=-1)


@dataclass(frozen=True, eq=False)
class OrbitSegment:
    """States along an integration, stored in integration order.

    ``x[k]`` and ``y[k]`` belong to ``times[k]``; ``times[0]`` is the start.
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    frame: str = "transformed"

    def state(self, k: int) -> State:
        return State(self.x[k], self.y[k])

    def at(self, t: float) -> State:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise GridRangeError(f"t={t} not in orbit segment")
        return self.state(k)

    @property
    def final(self) -> State:
        return self.state(-1)

    def ascending(self) -> "OrbitSegment":
        if self.times.size > 1 and self.times[1] < self.times[0]:
            return OrbitSegment(self.times[::-1], self.x[::-1], self.y[::-1], self.frame)
        return self


def transform(z_value, s: State) -> State:
    """``T``: scale both blocks by ``exp(-z)``."""
    e = np.exp(-np.asarray(z_value, dtype=float))[..., None]
    return State(s.x * e, s.y * e)


def inverse_transform(z_value, s: State) -> State:
    """``T^{-1}``: scale both blocks by ``exp(z)``."""
    e = np.exp(np.asarray(z_value, dtype=float))[..., None]
    return State(s.x * e, s.y * e)


def make_conjugated_fields(spec: SystemSpec):
    """Return ``(F, G)`` with ``F(x, y, z) = e^{-z} f(e^{z} x, e^{z} y)``.

    ``z`` broadcasts against the leading axes of ``x`` and ``y``.
    """
    f, g = spec.f, spec.g

    def _conj(fun):
        if isinstance(fun, Zero):
            return lambda x, y, z: fun(x, y)

        def field_(x, y, z):
            ez = np.exp(np.asarray(z, dtype=float))[..., None]
            return fun(ez * x, ez * y) / ez
        return field_

    return _conj(f), _conj(g)


def _scalar_factors(ou: OuRealization, i0: int, i1: int, rule: str) -> np.ndarray:
    """Noise factors for the steps from node ``i0`` towards node ``i1``."""
    I = ou.integral_values
    z = ou.z_values
    h = ou.dt
    if i1 >= i0:
        if rule == "average":
            return np.exp(np.diff(I[i0:i1 + 1]))
        return np.exp(z[i0:i1] * h)
    if rule == "average":
        return np.exp(-np.diff(I[i1:i0 + 1])[::-1])
    # steps k -> k-1 cover [t_{k-1}, t_k) where the cadlag value is z_{k-1}
    return np.exp(-z[i1:i0][::-1] * h)


_CHECK_EVERY = 512


def _check_finite(xs, ys, lo, hi, times, i0, step):
    lo = max(lo, 0)
    bad = ~(np.isfinite(xs[lo:hi + 1]).reshape(hi + 1 - lo, -1).all(axis=1)
            & np.isfinite(ys[lo:hi + 1]).reshape(hi + 1 - lo, -1).all(axis=1))
    if bad.any():
        j = lo + int(np.argmax(bad))
        t = float(times[i0 + step * j])
        raise DivergenceError(f"non-finite state at t={t:.6g}", time=t)


def integrate_rde(spec: SystemSpec, ou: OuRealization, s0: State, t_from: float,
                  t_to: float, z_rule: str = "average") -> OrbitSegment:
    """Integrate the conjugated random ODE from ``t_from`` to ``t_to``.

    One step of signed size ``h`` is::

        x <- exp(A h) * exp(dI) * (x + h F(x, y, z_k))

    and likewise for ``y``.  With ``z_rule="average"`` the noise exponent
    ``dI`` is the trapezoidal increment of ``I`` over the step; with
    ``z_rule="left"`` it is ``h`` times the cadlag value of ``z`` on the step.
    Backward integration (``t_to < t_from``) is supported.

    Raises
    ------
    GridRangeError
        If the window leaves the realization grid.
    DivergenceError
        If the state becomes non-finite; ``err.time`` records where.
    """
    if z_rule not in Z_RULES:
        raise ParameterDomainError(f"z_rule must be one of {Z_RULES}")
    g = ou.grid
    if not g.contains_window(min(t_from, t_to), max(t_from, t_to)):
        raise GridRangeError(
            f"integration window [{min(t_from, t_to)}, {max(t_from, t_to)}] outside "
            f"realization grid [{g.t_min}, {g.t_max}]")
    i0, i1 = g.index_of(t_from), g.index_of(t_to)
    step = 1 if i1 >= i0 else -1
    h = step * g.dt
    nsteps = abs(i1 - i0)
    EA, EB = spec.step_matrices(h)
    f = None if isinstance(spec.f, Zero) else spec.f
    g_ = None if isinstance(spec.g, Zero) else spec.g
    factors = _scalar_factors(ou, i0, i1, z_rule)
    # e^{z} on the visited nodes, in stepping order
    ez = np.exp(ou.z_values[i0:i1 + step if i1 + step >= 0 else None:step])
    times = g.times

    x = np.array(s0.x, dtype=float)
    y = np.array(s0.y, dtype=float)
    xs = np.empty((nsteps + 1,) + x.shape)
    ys = np.empty((nsteps + 1,) + y.shape)
    xs[0], ys[0] = x, y
    with np.errstate(over="ignore", invalid="ignore"):
        _run_steps(xs, ys, x, y, nsteps, h, ez, f, g_, factors, EA.T, EB.T, times, i0, step)
    return OrbitSegment(times[i0:i1 + step if i1 + step >= 0 else None:step].copy(),
                        xs, ys, "transformed")


def _run_steps(xs, ys, x, y, nsteps, h, ez, f, g, factors, EAt, EBt, times, i0, step):
    # f, g are the raw nonlinearities (None when zero); conjugation is inlined.
    # A decoupled linear scalar block is a cumulative product and needs no loop.
    n, m = EAt.shape[0], EBt.shape[0]
    x_free = f is None and n == 1
    y_free = g is None and m == 1
    if x_free:
        xs[1:] = x * np.cumprod(EAt[0, 0] * factors)[:, None]
    if y_free:
        ys[1:] = y * np.cumprod(EBt[0, 0] * factors)[:, None]
    if not (x_free and y_free):
        # scalar blocks: fold e^{A h} into the per-step factor
        cA = EAt[0, 0] * factors if n == 1 else None
        cB = EBt[0, 0] * factors if m == 1 else None
        for j in range(nsteps):
            if x_free:
                x = xs[j]
            if y_free:
                y = ys[j]
            e = ez[j]
            ex, ey = e * x, e * y
            if not x_free:
                xn = x if f is None else x + (h / e) * f(ex, ey)
                x = xn * cA[j] if n == 1 else (xn @ EAt) * factors[j]
                xs[j + 1] = x
            if not y_free:
                yn = y if g is None else y + (h / e) * g(ex, ey)
                y = yn * cB[j] if m == 1 else (yn @ EBt) * factors[j]
                ys[j + 1] = y
            if (j + 1) % _CHECK_EVERY == 0:
                _check_finite(xs, ys, j + 1 - _CHECK_EVERY, j + 1, times, i0, step)
    if nsteps:
        _check_finite(xs, ys, 0, nsteps, times, i0, step)


def solve_original(spec: SystemSpec, ou: OuRealization, s0: State, t_from: float,
                   t_to: float, z_rule: str = "average") -> OrbitSegment:
    """Orbit of the original Marcus system via the conjugacy.

    ``s0`` is transformed with ``z(theta_{t_from} omega)``, integrated as a
    random ODE and mapped back with ``z(theta_t omega)`` at each output time.
    """
    hat0 = transform(ou.z_at(t_from), s0)
    orbit = integrate_rde(spec, ou, hat0, t_from, t_to, z_rule)
    idx = np.array([ou.grid.index_of(t) for t in (orbit.times[0], orbit.times[-1])])
    step = 1 if idx[1] >= idx[0] else -1
    zt = ou.z_values[idx[0]:idx[1] + step if idx[1] + step >= 0 else None:step]
    e = np.exp(zt).reshape((-1,) + (1,) * (orbit.x.ndim - 1))
    return OrbitSegment(orbit.times, orbit.x * e, orbit.y * e, "original")


def marcus_linear_solution(a_rate: float, path: SamplePath, x0, t):
    """Closed form ``x0 * exp(a t + omega(t))`` of ``dx = a x dt + x <> dL``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    w = np.array([path(tt) for tt in t_arr])
    out = np.asarray(x0, dtype=float) * np.exp(a_rate * t_arr + w)
    return float(out[0]) if np.ndim(t) == 0 and np.ndim(x0) == 0 else out


def cocycle_residual(spec: SystemSpec, ou: OuRealization, s0: State, t1: float, t2: float,
                     z_rule: str = "average") -> float:
    """``sup |phi(t1 + s, omega, s0) - phi(s, theta_{t1} omega, phi(t1, omega, s0))|``.

    The supremum runs over the output times ``s`` between 0 and ``t2``.
    """
    whole = integrate_rde(spec, ou, s0, 0.0, t1 + t2, z_rule)
    to_mid = integrate_rde(spec, ou, s0, 0.0, t1, z_rule)
    shifted = ou.shift(t1)
    second = integrate_rde(spec, shifted, to_mid.final, 0.0, t2, z_rule)
    k1 = to_mid.times.size - 1
    n2 = second.times.size
    # whole[k1:] overlays the second leg when t1 and t2 share a sign;
    # otherwise compare at the common end point only.
    if (t1 >= 0) == (t2 >= 0) or t1 == 0 or t2 == 0:
        wx, wy = whole.x[k1:k1 + n2], whole.y[k1:k1 + n2]
        sx, sy = second.x, second.y
    else:
        wx, wy = whole.x[-1:], whole.y[-1:]
        sx, sy = second.x[-1:], second.y[-1:]
    diff = np.linalg.norm(wx - sx, axis=-1) + np.linalg.norm(wy - sy, axis=-1)
    return float(np.max(diff)) if diff.size else 0.0
