import functools

import pytest
from hypothesis import HealthCheck, settings

from opfrelax.netcase import load_case

settings.register_profile(
    "repo", deadline=None, max_examples=40, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def _case(name):
    return load_case(name)


@pytest.fixture(scope="session")
def case14():
    return _case("case14")


@pytest.fixture(scope="session")
def case30():
    return _case("case30")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
