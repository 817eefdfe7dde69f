import numpy as np
import pytest

from tcltrack.deadband import Deadband


@pytest.fixture
def band():
    return Deadband(19.75, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` for the acceptance summary."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, passed: bool, detail: str) -> bool:
        lines[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        passed, detail = lines[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
