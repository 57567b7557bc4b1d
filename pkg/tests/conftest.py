"""Shared fixtures and the acceptance-line reporter.

Acceptance tests register one human-readable pass/fail line each; the
``pytest_terminal_summary`` hook prints them after the run so the verdicts
survive output capture.
"""

import numpy as np
import pytest

from compsamp.schedule import build_linear_schedule

ACCEPTANCE_LINES: list[tuple[int, str]] = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(
        (number, f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} — {detail}"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sched2():
    """The 2-step schedule behind every hand-computed example."""
    return build_linear_schedule(2, 0.1, 0.2)


@pytest.fixture(scope="session")
def sched100():
    return build_linear_schedule(100)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
