from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from mitdsm.geometry import build_fibonacci_grid, build_gauss_grid

R = 1.5
SCENES = Path(__file__).resolve().parents[1] / "demos" / "scenes"


@pytest.fixture(scope="session")
def fib():
    return build_fibonacci_grid(R)


@pytest.fixture(scope="session")
def small_fib():
    return build_fibonacci_grid(R, 1500)


@pytest.fixture(scope="session")
def gauss():
    return build_gauss_grid(R, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene_dir():
    return SCENES


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
