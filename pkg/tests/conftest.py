import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def kernel():
    from vlasovwave.kernel import RegularizationKernel

    return RegularizationKernel()


@pytest.fixture(scope="session")
def two_particles():
    q = np.array([[-0.6, 0.1, 0.05], [0.7, -0.1, 0.0]])
    p = np.array([[0.1, 0.3, -0.05], [-0.2, -0.25, 0.1]])
    return q, p


# acceptance verdicts ---------------------------------------------------------------
_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])
