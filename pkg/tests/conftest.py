"""
Shared fixtures: environment laws loaded through the CLI's own parser.
"""
from pathlib import Path

import pytest

from environment.env_law import load_environment
from tilting.tilt import solve_beta, tilted_env

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the acceptance-tier tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def fixture_path():
    return lambda name: FIXTURES / f"{name}.json"


@pytest.fixture(scope="session")
def reference_env():
    return load_environment(FIXTURES / "reference_env.json")


@pytest.fixture(scope="session")
def pm1_env():
    """X = +1 w.p. 0.3, -1 w.p. 0.7"""
    return load_environment(FIXTURES / "two_atom_pm1.json")


@pytest.fixture(scope="session")
def ssrw_env():
    """Simple symmetric random walk as a (critical) environment"""
    return load_environment(FIXTURES / "ssrw.json")


@pytest.fixture(scope="session")
def binary_env():
    return load_environment(FIXTURES / "binary_env.json")


@pytest.fixture(scope="session")
def skewed_env():
    """X = -2 w.p. 0.7, +1 w.p. 0.3"""
    return load_environment(FIXTURES / "skewed_lattice.json")


@pytest.fixture(scope="session")
def reference_solution(reference_env):
    return solve_beta(reference_env)


@pytest.fixture(scope="session")
def pm1_solution(pm1_env):
    return solve_beta(pm1_env)


@pytest.fixture(scope="session")
def pm1_tilted(pm1_env, pm1_solution):
    """Tilted +-1 walk: symmetric"""
    return tilted_env(pm1_env, pm1_solution)
