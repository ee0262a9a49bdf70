"""Shared pytest plumbing: collects one verdict line per acceptance
criterion and prints them after the run, outside output capture."""

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
