"""Collects acceptance-criterion verdicts and prints them after the run."""

import pytest

VERDICTS = []


@pytest.fixture
def criterion():
    """Record ``(number, title, passed, detail)`` for the end-of-run summary."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}  {detail}".rstrip()
        VERDICTS.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(VERDICTS):
        terminalreporter.write_line(line)
