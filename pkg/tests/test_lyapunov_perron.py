import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from levyfoliation.errors import GridRangeError, NonConvergenceError, ParameterDomainError
from levyfoliation.lyapunov_perron import (
    DifferenceOrbit,
    EtaWeights,
    LPParams,
    _Kernel,
    base_orbit,
    fiber_lipschitz_bound,
    gap_condition,
    initial_iterate,
    lp_operator,
    solve_fixed_point,
    stable_fiber,
    transform_fiber_to_original,
    unstable_fiber,
    unstable_manifold,
    weighted_norm,
)
from levyfoliation.nonlinear import Linear, SinCoupling, Zero
from levyfoliation.rds import State, SystemSpec, example5_system

from oracles import FROZEN, example5_fiber, example5_manifold, lipschitz_bound, rho

XI = np.round(np.linspace(-3, 3, 13), 12)[:, None]
OVERRIDE = LPParams(gap_override=True)


def s(x, y):
    return State(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float)))


def quiet(fn, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*a, **k)


# -- gap calculus --------------------------------------------------------------

def test_gap_condition_examples():
    assert gap_condition(1, -1, 1, 0) == (FROZEN["rho_1_m1_1_0"], False)
    r, ok = gap_condition(1, -1, 0.2, 0)
    assert r == pytest.approx(FROZEN["rho_1_m1_02_0"]) and ok
    for eta in (-0.9, 0.0, 0.3):
        assert gap_condition(1, -1, 0.0, eta) == (0.0, True)


@pytest.mark.parametrize("eta", [1.0, -1.0, 2.0])
def test_gap_condition_eta_outside(eta):
    with pytest.raises(ParameterDomainError):
        gap_condition(1, -1, 0.2, eta)


def test_lipschitz_bound_examples():
    assert fiber_lipschitz_bound(1, -1, 0.2, 0) == pytest.approx(FROZEN["lip_1_m1_02_0"])
    assert fiber_lipschitz_bound(2, -1, 0.3, 0.5) == pytest.approx(FROZEN["lip_2_m1_03_05"])
    assert fiber_lipschitz_bound(1, -1, 0.0, 0.2) == 0.0
    with pytest.raises(ParameterDomainError):
        fiber_lipschitz_bound(1, -1, 1.0, 0.0)


@given(st.floats(0.1, 5), st.floats(-5, -0.1), st.floats(0, 1), st.floats(0.01, 0.99))
def test_gap_formula_matches_oracle(a, b, K, frac):
    eta = b + frac * (a - b)
    r, ok = gap_condition(a, b, K, eta)
    assert r == pytest.approx(rho(a, b, K, eta))
    if ok:
        assert fiber_lipschitz_bound(a, b, K, eta) == pytest.approx(lipschitz_bound(a, b, K, eta))


def test_eta_weights_domain(ou3):
    with pytest.raises(ParameterDomainError):
        EtaWeights(-0.1, ou3, "unstable")
    with pytest.raises(ParameterDomainError):
        EtaWeights(0.1, ou3, "stable")
    with pytest.raises(ParameterDomainError):
        EtaWeights(1.5, ou3, "unstable").check(example5_system())


# -- weighted norm ---------------------------------------------------------------

def test_weighted_norm_cancels_weight(ou3):
    w = EtaWeights(0.5, ou3)
    sl = ou3.window_slice(-40.0, 0.0)
    t = ou3.times[sl]
    u = np.exp(0.5 * t + ou3.integral_values[sl])[:, None] * np.array([0.6, 0.8])
    orbit = DifferenceOrbit(t, u, np.zeros((t.size, 1)))
    assert weighted_norm(orbit, w) == pytest.approx(1.0, rel=1e-12)
    zero = DifferenceOrbit(t, 0 * u, np.zeros((t.size, 1)))
    assert weighted_norm(zero, w) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50))
def test_weighted_norm_homogeneous(ou3, c):
    w = EtaWeights(0.3, ou3)
    sl = ou3.window_slice(-5.0, 0.0)
    t = ou3.times[sl]
    rng = np.random.default_rng(4)
    orbit = DifferenceOrbit(t, rng.normal(size=(t.size, 1)), rng.normal(size=(t.size, 2)))
    assert weighted_norm(orbit.scaled(c), w) == pytest.approx(abs(c) * weighted_norm(orbit, w))


def test_weighted_norm_grid_mismatch(ou3):
    w = EtaWeights(0.3, ou3)
    t = np.arange(-5.0, 0.0, 0.01)
    with pytest.raises(GridRangeError):
        weighted_norm(DifferenceOrbit(t, np.zeros((t.size, 1)), np.zeros((t.size, 1))), w)


# -- kernel quadrature -------------------------------------------------------------

@pytest.mark.parametrize("M", [np.array([[1.0]]), np.array([[-1.0, 2.0], [0.0, -3.0]]),
                               np.array([[0.0, 1.0], [-1.0, 0.0]])])
def test_kernel_convolution_matches_brute_force(M):
    dt = 0.01
    t = np.arange(0, 201) * dt
    rng = np.random.default_rng(0)
    q = np.stack([np.sin(t), np.cos(2 * t)[:, None].repeat(1, 1)[:, 0]], axis=1)[:, :M.shape[0]]
    q = q[:, None, :] * rng.normal(size=(1, 3, 1))
    k = _Kernel(M, dt)
    out = k.convolve(q)
    for idx in (0, 50, 200):
        vals = np.stack([q[j] @ expm(M * (t[idx] - t[j])).T for j in range(idx + 1)])
        if idx == 0:
            ref = np.zeros_like(q[0])
        else:
            w = np.full(idx + 1, dt)
            w[0] = w[-1] = dt / 2
            ref = np.tensordot(w, vals, axes=1)
        assert np.allclose(out[idx], ref, atol=1e-12)
    x0 = rng.normal(size=(3, M.shape[0]))
    assert np.allclose(k.powers(x0, t)[150], x0 @ expm(M * t[150]).T)


def test_kernel_defective_matrix_falls_back():
    M = np.array([[1.0, 1.0], [0.0, 1.0]])  # Jordan block
    k = _Kernel(M, 0.1)
    assert not k.modal
    q = np.ones((11, 2))
    out = k.convolve(q)
    assert np.isfinite(out).all()
    assert np.allclose(k.powers(np.ones(2), np.array([0.5]))[0], np.ones(2) @ expm(0.5 * M).T)


# -- operator ----------------------------------------------------------------------

def test_operator_linear_system_one_application(ou3):
    spec = SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, Zero(1), Zero(1))
    w = EtaWeights(0.5, ou3)
    base = base_orbit(spec, ou3, s(1.0, 1.0), "unstable", 40.0)
    rng = np.random.default_rng(1)
    phi = DifferenceOrbit(base.times, rng.normal(size=(base.times.size, 1)),
                          rng.normal(size=(base.times.size, 1)))
    out = lp_operator(phi, [0.7], base, spec, w)
    assert np.allclose(out.u[:, 0], 0.7 * np.exp(base.times + base.I), rtol=1e-12)
    assert not out.v.any()


def test_operator_contracts_eps02(ou3):
    spec = example5_system(0.2)
    w = EtaWeights(0.0, ou3)
    base = base_orbit(spec, ou3, s(1.0, 0.5), "unstable", 40.0)
    rng = np.random.default_rng(2)
    N = base.times.size
    env = np.exp(base.I)[:, None, None]
    for _ in range(5):
        p1 = DifferenceOrbit(base.times, env * rng.normal(size=(1, 10, 1)) * np.cos(
            rng.uniform(0, 3, (1, 10, 1)) * base.times[:, None, None]), np.zeros((N, 10, 1)))
        p2 = DifferenceOrbit(base.times, env * rng.normal(size=(1, 10, 1)), np.ones((N, 10, 1)))
        c0 = rng.normal(size=(10, 1))
        d = (lp_operator(p1, c0, base, spec, w) - lp_operator(p2, c0, base, spec, w))
        ratio = np.asarray(weighted_norm(d, w)) / np.asarray(weighted_norm(p1 - p2, w))
        assert ratio.max() <= 0.4 + 0.05


def test_operator_window_mismatch(ou3):
    spec = example5_system(0.2)
    w = EtaWeights(0.0, ou3)
    base = base_orbit(spec, ou3, s(1.0, 0.5), "unstable", 40.0)
    t = base.times[100:]
    phi = DifferenceOrbit(t, np.zeros((t.size, 1)), np.zeros((t.size, 1)))
    with pytest.raises(GridRangeError):
        lp_operator(phi, [1.0], base, spec, w)


def test_fixed_point_example5_override(ou3):
    spec = example5_system(1.0)
    w = EtaWeights(0.0, ou3)
    x0 = 1.0
    base = base_orbit(spec, ou3, s(x0, 0.0), "unstable", 40.0)
    for u0 in (-2.5, -0.4, 1.0, 2.0):
        with pytest.warns(RuntimeWarning, match="gap"):
            phi = solve_fixed_point([u0], base, spec, w, gap_override=True)
        assert phi.at_zero[1][0] == pytest.approx(0.5 * (abs(u0 + x0) - abs(x0)), abs=1e-3)


def test_fixed_point_refuses_without_override(ou3):
    spec = example5_system(1.0)
    w = EtaWeights(0.0, ou3)
    base = base_orbit(spec, ou3, s(1.0, 0.0), "unstable", 40.0)
    with pytest.raises(ParameterDomainError, match="gap"):
        solve_fixed_point([1.0], base, spec, w)


def test_zero_initial_difference_gives_zero(ou3):
    spec = coupled_spec(0.15)
    w = EtaWeights(0.0, ou3)
    base = base_orbit(spec, ou3, s(0.5, -0.3), "unstable", 40.0)
    phi = solve_fixed_point([0.0], base, spec, w)
    assert not phi.u.any() and not phi.v.any()


def coupled_spec(eps):
    # both blocks coupled, so the iteration is genuinely nontrivial
    return SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, SinCoupling(eps, "y"), SinCoupling(eps, "x"))


def test_geometric_residual_decay_and_bounds(ou3):
    spec = coupled_spec(0.2)
    w = EtaWeights(0.0, ou3)
    r, _ = gap_condition(1, -1, spec.K, 0.0)
    base = base_orbit(spec, ou3, s(0.5, -0.3), "unstable", 40.0)
    phi = solve_fixed_point([1.3], base, spec, w, tol=1e-12)
    res = np.array(phi.residuals)
    ratios = res[1:] / res[:-1]
    assert phi.iterations > 3
    assert np.all(ratios[res[:-1] > 1e-13] <= r + 0.05)
    assert weighted_norm(phi, w) <= 1.3 / (1 - r) * 1.05


def test_nonconvergence_carries_history(ou3):
    spec = coupled_spec(0.2)
    w = EtaWeights(0.0, ou3)
    base = base_orbit(spec, ou3, s(0.5, -0.3), "unstable", 40.0)
    with pytest.raises(NonConvergenceError) as info:
        solve_fixed_point([1.3], base, spec, w, tol=1e-14, max_iter=2)
    assert len(info.value.residuals) == 2


def test_continuous_dependence(ou3):
    spec = coupled_spec(0.2)
    w = EtaWeights(0.0, ou3)
    r, _ = gap_condition(1, -1, spec.K, 0.0)
    base = base_orbit(spec, ou3, s(0.5, -0.3), "unstable", 40.0)
    rng = np.random.default_rng(3)
    a, b = rng.normal(scale=2, size=(2, 50, 1))
    pa = solve_fixed_point(a, base, spec, w, tol=1e-10)
    pb = solve_fixed_point(b, base, spec, w, tol=1e-10)
    ratio = np.asarray(weighted_norm(pa - pb, w)) / np.abs(a - b)[:, 0]
    assert ratio.max() <= (1 + 0.05) / (1 - r)


# -- fibers and manifold -----------------------------------------------------------

def test_unstable_fiber_example5(ou3):
    fib = quiet(unstable_fiber, example5_system(), ou3, s(1.0, 0.0), XI, OVERRIDE)
    assert np.max(np.abs(fib.values[:, 0] - example5_fiber(1.0, 0.0, XI[:, 0]))) < 1e-3
    two = quiet(unstable_fiber, example5_system(), ou3, s(1.0, 0.0), [[2.0]], OVERRIDE)
    assert two.values[0, 0] == pytest.approx(FROZEN["l_x1_y0_xi2"], abs=1e-3)
    assert fib.side == "unstable" and fib.frame == "transformed"


def test_fiber_through_base_point_exact(ou3):
    fib = quiet(unstable_fiber, example5_system(), ou3, s(-2.0, 1.0), [[-2.0]], OVERRIDE)
    assert fib.values[0, 0] == 1.0
    assert fib.self_residual == 0.0


@pytest.mark.parametrize("eps", [0.1, 0.2, 0.4])
def test_unstable_fiber_eps_closed_form(ou3, eps):
    prm = LPParams(eta=0.0)
    fib = unstable_fiber(example5_system(eps), ou3, s(1.0, 0.5), XI, prm)
    assert np.max(np.abs(fib.values[:, 0] - example5_fiber(1.0, 0.5, XI[:, 0], eps))) < 1e-3
    assert fib.lipschitz_estimate() <= fiber_lipschitz_bound(1, -1, eps, 0.0) * 1.05


def test_default_eta_refuses_eps04(ou3):
    with pytest.raises(ParameterDomainError):
        unstable_fiber(example5_system(0.4), ou3, s(1.0, 0.5), XI)


def test_unstable_manifold_example5(ou3):
    man = quiet(unstable_manifold, example5_system(), ou3, np.array([[3.0], [0.0], [-1.0]]),
                OVERRIDE)
    assert man.values[0, 0] == pytest.approx(FROZEN["h_xi3"], abs=1e-3)
    assert abs(man.values[1, 0]) <= 1e-6
    assert man.value_at_origin() <= 1e-6
    m2 = unstable_manifold(example5_system(0.2), ou3, XI, LPParams(eta=0.0))
    assert np.max(np.abs(m2.values[:, 0] - example5_manifold(XI[:, 0], 0.2))) < 1e-3


def test_manifold_is_fiber_through_manifold_point(ou3):
    spec = coupled_spec(0.2)
    prm = LPParams(eta=0.0, tol=1e-10)
    man = unstable_manifold(spec, ou3, XI, prm)
    x0 = 1.0
    h0 = unstable_manifold(spec, ou3, [[x0]], prm).values[0]
    fib = unstable_fiber(spec, ou3, State(np.array([x0]), h0), XI, prm)
    assert np.max(np.abs(fib.values - man.values)) < 1e-3


def test_sample_order_independence(ou3):
    spec = coupled_spec(0.2)
    prm = LPParams(eta=0.0)
    a = unstable_fiber(spec, ou3, s(0.5, 0.1), XI, prm)
    b = unstable_fiber(spec, ou3, s(0.5, 0.1), XI[::-1], prm)
    assert np.allclose(a.values, b.values[::-1], atol=1e-12)


def test_stable_fiber_example5(ou3_long):
    fib = quiet(stable_fiber, example5_system(), ou3_long, s(0.7, -0.2), XI, OVERRIDE)
    assert np.max(np.abs(fib.values - 0.7)) < 1e-3
    exact = quiet(stable_fiber, example5_system(), ou3_long, s(0.7, -0.2), [[-0.2]], OVERRIDE)
    assert exact.values[0, 0] == 0.7
    assert fib.side == "stable"


def test_stable_fiber_linear_system(ou3_long):
    spec = SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, Zero(1), Zero(1))
    fib = stable_fiber(spec, ou3_long, s(0.0, 0.0), XI)
    assert not fib.values.any()


def test_multidimensional_system_runs(ou3):
    R = np.array([[math.cos(0.4), -math.sin(0.4)], [math.sin(0.4), math.cos(0.4)]])
    A = R @ np.diag([1.0, 1.5]) @ R.T
    spec = SystemSpec(A, [[-1.0]], 1.0, -1.0, SinCoupling(0.1, "y", 2, 1),
                      SinCoupling(0.1, "x", 1, 2))
    prm = LPParams(eta=0.0)
    xi = np.array([[0.5, 0.5], [1.0, -1.0], [0.2, 0.3]])
    fib = unstable_fiber(spec, ou3, State(np.array([0.2, 0.3]), np.array([0.1])), xi, prm)
    assert fib.values.shape == (3, 1)
    assert abs(fib.values[2, 0] - 0.1) < 1e-12
    bound = fiber_lipschitz_bound(1, -1, spec.K, 0.0)
    assert fib.lipschitz_estimate() <= bound * 1.05


# -- transform to the original frame ------------------------------------------------

def test_transform_identity_at_zero(ou3):
    fib = quiet(unstable_fiber, example5_system(), ou3, s(1.0, 0.5), XI, OVERRIDE)
    same = transform_fiber_to_original(fib, 0.0)
    assert np.array_equal(same.values, fib.values) and same.frame == "original"


def test_transform_homogeneous_fiber_unchanged(ou3):
    # with z0 = ln 2 the transformed base is (x0/2, y0/2); the original graph is the same line
    x0, y0 = 1.0, 0.5
    fib = quiet(unstable_fiber, example5_system(), ou3, s(x0 / 2, y0 / 2), XI / 2, OVERRIDE)
    orig = transform_fiber_to_original(fib, math.log(2))
    expected = y0 + 0.5 * (np.abs(orig.samples[:, 0]) - abs(x0))
    assert np.allclose(orig.values[:, 0], expected, atol=1e-3)
    assert np.allclose(orig.base_point.x, [x0])


def test_transform_affine_fiber(ou3):
    c = 0.3
    spec = SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, Zero(1), Linear(((c,),), ((0.0,),)))
    x0, y0 = 0.4, -0.2
    fib = unstable_fiber(spec, ou3, s(x0, y0), XI, LPParams(eta=0.0))
    assert np.allclose(fib.values[:, 0], y0 + c / 2 * (XI[:, 0] - x0), atol=1e-3)
    z0 = 0.8
    orig = transform_fiber_to_original(fib, z0)
    slope = np.polyfit(orig.samples[:, 0], orig.values[:, 0], 1)
    assert slope[0] == pytest.approx(c / 2, abs=1e-3)
    assert slope[1] == pytest.approx(math.exp(z0) * (y0 - c / 2 * x0), abs=1e-3)
