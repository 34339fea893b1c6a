import sys
from pathlib import Path

import pytest

# lets the test modules import the shared oracles as a plain module
sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {}  # number -> (passed, detail)


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        CRITERIA[number] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
