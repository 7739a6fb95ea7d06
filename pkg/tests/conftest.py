import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = []


class CriterionLog:
    """Collects one verdict line per acceptance criterion."""

    def __call__(self, number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed


@pytest.fixture(scope="session")
def criterion():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA, key=lambda x: x[0]):
        terminalreporter.write_line(line)
