"""Shared pytest wiring: the acceptance summary block.

End-to-end recovery tests (test_acceptance.py) push one result line each
into ACCEPTANCE_LINES; the hook below prints them after the normal pytest
output so the measured numbers survive output capturing.
"""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance summary")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
