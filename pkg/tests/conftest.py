from __future__ import annotations

import pytest

from fracext.extension import prepare_exterior
from fracext.fattening import fatten
from fracext.geometry import builtin_geometry

# acceptance lines collected during the run, printed once at the end
CRITERIA: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cusp8():
    return builtin_geometry("cusp_touching_halfplane", 8)


@pytest.fixture(scope="session")
def cusp9():
    return builtin_geometry("cusp_touching_halfplane", 9)


@pytest.fixture(scope="session")
def exp9():
    return builtin_geometry("exp_whitney_cusp", 9)


@pytest.fixture(scope="session")
def fat_cusp8(cusp8):
    return fatten(cusp8)


@pytest.fixture(scope="session")
def fat_cusp9(cusp9):
    return fatten(cusp9)


@pytest.fixture(scope="session")
def fat_exp9(exp9):
    return fatten(exp9)


@pytest.fixture(scope="session")
def plan_cusp8(fat_cusp8):
    return prepare_exterior(fat_cusp8)


@pytest.fixture(scope="session")
def halfplane7():
    return builtin_geometry("halfplane", 7)


@pytest.fixture(scope="session")
def fat_halfplane7(halfplane7):
    return fatten(halfplane7)


@pytest.fixture(scope="session")
def plan_halfplane7(fat_halfplane7):
    return prepare_exterior(fat_halfplane7)
