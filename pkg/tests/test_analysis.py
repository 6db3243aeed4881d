import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levyfoliation.analysis import (
    DecayFit,
    OracleReport,
    backward_decay_check,
    contraction_ratios,
    continuous_dependence_ratios,
    example5_fiber_report,
    example5_manifold_report,
    example5_oracle,
    fit_decay,
    forward_decay_check,
    invariance_residual,
    manifold_coincidence,
    parallelism_check,
    picard_ratios,
)
from levyfoliation.errors import GridRangeError, ParameterDomainError
from levyfoliation.lyapunov_perron import LPParams, gap_condition, unstable_fiber, unstable_manifold
from levyfoliation.nonlinear import SinCoupling, Zero
from levyfoliation.rds import State, SystemSpec, example5_system

from conftest import make_ou
from oracles import FROZEN

XI = np.round(np.linspace(-3, 3, 13), 12)[:, None]
OVERRIDE = LPParams(gap_override=True)


def s(x, y):
    return State(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float)))


@pytest.fixture(autouse=True)
def _no_gap_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*gap.*", category=RuntimeWarning)
        yield


# -- fitting ---------------------------------------------------------------------

def test_fit_exact_exponential():
    t = np.linspace(-40, 0, 4001)
    I = 0.3 * np.sin(t)
    fit = fit_decay(t, 2.0 * np.exp(0.5 * t + I), I)
    assert fit.slope == pytest.approx(0.5, abs=1e-6)
    assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-6)


@given(st.floats(-3, 3), st.floats(-5, 5))
def test_fit_recovers_any_exponent(rate, c):
    t = np.linspace(0, 20, 501)
    fit = fit_decay(t, np.exp(c + rate * t), np.zeros_like(t))
    assert fit.slope == pytest.approx(rate, abs=1e-6)


def test_fit_bound_violation():
    t = np.linspace(-10, 0, 101)
    fit = fit_decay(t, np.exp(t), np.zeros_like(t), eta=1.0, log_bound=-0.25)
    assert fit.max_violation == pytest.approx(0.25)


def test_decay_fit_window_must_be_nonempty():
    with pytest.raises(ParameterDomainError):
        DecayFit((0.0, 0.0), 1.0, 0.0, 0.0)


def test_identical_points_vacuous(ou3):
    fit = backward_decay_check(example5_system(), ou3, s(1, 0.5), s(1, 0.5), 2.0, 40.0)
    assert fit.max_violation == -math.inf


def test_backward_decay_example5(ou3):
    spec = example5_system()
    fit = backward_decay_check(spec, ou3, s(1, 0.5), s(2, 1.0), 2.0, 40.0, OVERRIDE)
    assert fit.slope >= 0.9
    # direct backward integration amplifies step error by e^{|t|} in the y-block
    short = backward_decay_check(spec, ou3, s(1, 0.5), s(2, 1.0), 2.0, 40.0, OVERRIDE,
                                 direct_window=1.0)
    assert short.direct_mismatch < 1e-2


def test_backward_decay_eps02_bound(ou3):
    spec = example5_system(0.2)
    prm = LPParams(eta=0.5)
    r, _ = gap_condition(1, -1, 0.2, 0.5)
    # mate of (1, 0.5) on its fiber: y = 0.5 + 0.1 (|2| - 1)
    fit = backward_decay_check(spec, ou3, s(1, 0.5), s(2, 0.6), r, 40.0, prm)
    assert fit.slope >= 0.5
    assert fit.max_violation <= 1e-2


def test_non_mates_rejected(ou3):
    with pytest.raises(ParameterDomainError, match="fiber"):
        backward_decay_check(example5_system(0.2), ou3, s(1, 0.5), s(2, 3.0), 0.4, 40.0,
                             LPParams(eta=0.0))


def test_forward_decay_example5(ou3_long):
    spec = example5_system()
    fit = forward_decay_check(spec, ou3_long, s(0.7, 0.0), s(0.7, 2.0), 2.0, 40.0, OVERRIDE)
    assert fit.slope <= -0.9


# -- invariance -----------------------------------------------------------------------

def test_invariance_tau_zero_is_membership(ou3):
    spec = example5_system(0.2)
    prm = LPParams(eta=0.0)
    r = invariance_residual(spec, ou3, s(1, 0.5), s(2, 0.6), 0.0, prm)
    assert r <= 10 * prm.tol


def test_invariance_tau_one(ou3):
    r = invariance_residual(example5_system(), ou3, s(1, 0.5), s(2, 1.0), 1.0, OVERRIDE)
    assert r < 1e-2


def test_invariance_linear_system(ou3):
    spec = SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, Zero(1), Zero(1))
    for tau in (0.5, 2.0):
        assert invariance_residual(spec, ou3, s(1, 0.5), s(-2, 0.5), tau) < 10 * 1e-3


def test_invariance_off_fiber_rejected(ou3):
    with pytest.raises(ParameterDomainError):
        invariance_residual(example5_system(0.2), ou3, s(1, 0.5), s(2, 2.0), 1.0,
                            LPParams(eta=0.0))


def test_invariance_improves_with_resolution():
    spec = SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, SinCoupling(0.2, "y"), SinCoupling(0.2, "x"))
    res = []
    for dt, tol in ((4e-3, 1e-5), (1e-3, 1e-7)):
        ou = make_ou(5, dt=dt)
        base = s(1.0, 0.3)
        mate_x = np.array([[2.0]])
        mate_y = unstable_fiber(spec, ou, base, mate_x, LPParams(eta=0.0, tol=tol)).values[0]
        res.append(invariance_residual(spec, ou, base, State(mate_x[0], mate_y), 1.0,
                                       LPParams(eta=0.0, tol=tol)))
    assert res[1] <= res[0]


# -- geometry ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def e5_graphs(ou3):
    spec = example5_system()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        f1 = unstable_fiber(spec, ou3, s(1, 0), XI, OVERRIDE)
        f2 = unstable_fiber(spec, ou3, s(1, 1), XI, OVERRIDE)
        man = unstable_manifold(spec, ou3, XI, OVERRIDE)
    return f1, f2, man


def test_parallel_constants_example5(e5_graphs):
    f1, f2, man = e5_graphs
    rep = parallelism_check(f1, f2, man)
    assert rep.passed
    assert rep.details["p"][0] == pytest.approx(-0.5, abs=1e-3)
    assert rep.details["q"][0] == pytest.approx(0.5, abs=1e-3)
    assert rep.details["p_minus_q"][0] == pytest.approx(-1.0, abs=1e-3)


def test_parallel_constant_is_offset_from_manifold(e5_graphs, ou3):
    f1, _, man = e5_graphs
    h_x0 = unstable_manifold(example5_system(), ou3, [[1.0]], OVERRIDE).values[0, 0]
    p = parallelism_check(f1, f1, man).details["p"][0]
    assert p == pytest.approx(0.0 - h_x0, abs=1e-3)


def test_same_fiber_twice_exact(e5_graphs):
    f1, _, man = e5_graphs
    rep = parallelism_check(f1, f1, man)
    assert rep.computed[2] == 0.0 and rep.details["p_minus_q"] == [0.0]


def test_manifold_point_fiber_coincides(e5_graphs, ou3):
    _, _, man = e5_graphs
    fib = unstable_fiber(example5_system(), ou3, s(2, 1.0), XI, OVERRIDE)
    assert manifold_coincidence(fib, man).passed


def test_parallelism_sample_mismatch(e5_graphs, ou3):
    f1, f2, _ = e5_graphs
    other = unstable_manifold(example5_system(), ou3, XI[:5], OVERRIDE)
    with pytest.raises(GridRangeError):
        parallelism_check(f1, f2, other)


def test_oracle_reports(e5_graphs):
    f1, _, man = e5_graphs
    assert example5_fiber_report(f1, 1.0).passed
    rep = example5_manifold_report(man, 1.0)
    assert rep.passed and rep.line().startswith("PASS")


def test_oracle_report_shape_check():
    with pytest.raises(ParameterDomainError):
        OracleReport("x", np.zeros(2), np.zeros(3), 0.0, 1.0, True)


# -- closed forms --------------------------------------------------------------------------

def test_example5_oracle_values():
    assert example5_oracle(1.0, 0.0, 2.0)[0] == FROZEN["l_x1_y0_xi2"]
    assert example5_oracle(0.0, 0.0, 3.0)[1] == FROZEN["h_xi3"]


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_example5_oracle_decoupled(x0, y0, xi):
    assert example5_oracle(x0, y0, xi, 0.0) == (y0, 0.0)


def test_example5_oracle_vectorised():
    l, h = example5_oracle(1.0, 0.5, np.array([-1.0, 0.0, 3.0]), 0.2)
    assert np.allclose(l, [0.5, 0.4, 0.7]) and np.allclose(h, [0.1, 0.0, 0.3])


# -- ratio instruments --------------------------------------------------------------------

@settings(max_examples=6, deadline=None)
@given(st.sampled_from([0.1, 0.2, 0.4]), st.integers(0, 10_000))
def test_contraction_property(ou3, eps, seed):
    spec = example5_system(eps)
    r, _ = gap_condition(1, -1, eps, 0.0)
    ratios = contraction_ratios(spec, ou3, s(1, 0.5), 0.0, n_pairs=50, seed=seed)
    assert ratios.max() <= r + 0.05


@settings(max_examples=4, deadline=None)
@given(st.floats(0.05, 0.3), st.integers(0, 10_000))
def test_continuous_dependence_property(ou3, eps, seed):
    spec = SystemSpec([[1.0]], [[-1.0]], 1.0, -1.0, SinCoupling(eps, "y"), SinCoupling(eps, "x"))
    r, _ = gap_condition(1, -1, eps, 0.0)
    ratios = continuous_dependence_ratios(spec, ou3, s(0.5, 0.2), 0.0, n_pairs=50, seed=seed)
    assert ratios.max() <= (1 + 0.05) / (1 - r)


def test_picard_ratios_floor():
    assert np.allclose(picard_ratios([1.0, 0.5, 0.25, 1e-14, 1e-15]), [0.5, 0.5, 4e-14])
    assert picard_ratios([1.0]).size == 0
