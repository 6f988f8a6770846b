import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixedrl import CrissCross, FiniteMixedEnv

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=10, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def crisscross():
    return CrissCross()


def random_finite_env(rng, S=2, L=3, A=2, max_cost=5.0) -> FiniteMixedEnv:
    kernel = rng.dirichlet(np.ones(S), size=(S, A))
    g_table = rng.integers(0, L, size=(S, L, A, S))
    cost = rng.uniform(0, max_cost, size=(S, L, A))
    return FiniteMixedEnv(kernel, g_table, cost)


@pytest.fixture
def small_env(rng):
    return random_finite_env(rng)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
