import numpy as np
import pytest

from levyfoliation.levy_path import StableParams, TimeGrid, generate_two_sided_path
from levyfoliation.ou import stationary_z


def make_ou(seed, t_min=-60.0, t_max=10.0, dt=1e-3, alpha=1.5, burn_in=40.0):
    """Stationary realization on ``[t_min, t_max]`` (path sampled burn_in further back)."""
    grid = TimeGrid(t_min - burn_in, t_max, dt)
    path = generate_two_sided_path(StableParams(alpha, seed=seed), grid)
    return stationary_z(path, burn_in)


@pytest.fixture(scope="session")
def ou3():
    return make_ou(3)


@pytest.fixture(scope="session")
def ou3_long():
    # covers [0, 40] for stable-side solves
    return make_ou(3, t_max=50.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``record(n, title, passed, detail)`` prints a PASS/FAIL line and asserts."""
    def record(n, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} [{n:2d}] {title}: {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
