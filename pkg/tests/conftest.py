from __future__ import annotations

import pytest

from contmeas.lattice import GridSpec, ModelParams, gaussian_packet

# PASS/FAIL lines written by the acceptance suite, echoed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def grid():
    return GridSpec(128, -12.0, 12.0)


@pytest.fixture
def model():
    return ModelParams(mass=1.0, gamma=1.0)


@pytest.fixture
def packet(grid):
    return gaussian_packet(grid, mean_q=0.3, mean_p=0.2, var_q=0.5, cov_qp=0.1)


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool | None, detail: str):
        status = "REPORT" if passed is None else ("PASS" if passed else "FAIL")
        line = f"{status} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
