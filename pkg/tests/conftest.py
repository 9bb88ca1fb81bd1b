"""Shared pytest configuration.

Acceptance tests register one human-readable line per criterion in
ACCEPTANCE_LINES; the terminal summary hook prints them after the run so the
pass/fail status of every criterion is visible regardless of capture mode.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
