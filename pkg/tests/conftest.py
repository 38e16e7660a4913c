"""Shared test plumbing: the acceptance scoreboard.

test_acceptance.py funnels one line per criterion through the
acceptance_board fixture; the terminal-summary hook replays the lines
after pytest's own summary so the sheet survives output capture.
"""

ACCEPTANCE_BOARD = []

import pytest


@pytest.fixture(scope="session")
def acceptance_board():
    return ACCEPTANCE_BOARD


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_BOARD:
        terminalreporter.write_sep("=", "acceptance scoreboard")
        for line in ACCEPTANCE_BOARD:
            terminalreporter.write_line(line)
