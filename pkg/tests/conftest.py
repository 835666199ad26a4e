import time

import pytest

from drfagent import Config
from drfagent.evaluation import builtin_suite

SUITE_BUDGET = 60.0  # seconds for the whole test run

# (number, title, passed) appended by tests/test_acceptance.py
CRITERIA: list[tuple[int, str, bool]] = []
_started = time.perf_counter()


@pytest.fixture(scope="session")
def config():
    return Config()


@pytest.fixture(scope="session")
def suite(config):
    return builtin_suite(config)


def pytest_sessionstart(session):
    global _started
    _started = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    elapsed = time.perf_counter() - _started
    terminalreporter.section("acceptance criteria")
    for number, title, passed in sorted(CRITERIA):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {title}")
    ok = elapsed < SUITE_BUDGET
    terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion 12: test run took {elapsed:.1f} s "
                                f"(budget {SUITE_BUDGET:.0f} s)")


def pytest_sessionfinish(session, exitstatus):
    if CRITERIA and time.perf_counter() - _started >= SUITE_BUDGET and exitstatus == 0:
        session.exitstatus = 1
