"""Shared pytest plumbing.

Collects the one-line [PASS]/[FAIL] verdicts emitted by the acceptance
tests and replays them in the terminal summary, so the verdict lines are
visible even when pytest captures per-test stdout.
"""

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
