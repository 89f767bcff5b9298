import numpy as np
import pytest

from tubesolve import CircleGrid, FrequencyBox

ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    """Store one acceptance outcome; printed again in the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}" + (f" ({detail})" if detail else "")
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid512():
    return CircleGrid(512)


@pytest.fixture
def box1():
    return FrequencyBox(1, 16)
