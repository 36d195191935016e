from pathlib import Path

import pytest

from lcflow.grid import Grid
from lcflow.model import PhysParams

DATA = Path(__file__).parent / "data"
REPO = Path(__file__).resolve().parents[1]

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def grid16():
    return Grid((16, 16, 16))


@pytest.fixture
def grid32():
    return Grid((32, 32, 32))


@pytest.fixture
def params():
    return PhysParams()


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(number, passed, detail)."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(_ACCEPTANCE_LINES[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
