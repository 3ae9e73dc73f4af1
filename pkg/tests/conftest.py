import numpy as np
import pytest

from cfmgm.config import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def default_cfg():
    return SystemConfig()


@pytest.fixture
def los_cfg():
    """Default scenario with the NLoS part switched off."""
    return SystemConfig(rician_kappa_db=float("inf"))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line; all lines are echoed after the run."""

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
