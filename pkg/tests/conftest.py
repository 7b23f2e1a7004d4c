"""Collect acceptance verdicts and print them after the run."""

import pytest

ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """``verdict(number, ok, detail)`` records and prints one criterion line."""

    def record(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
