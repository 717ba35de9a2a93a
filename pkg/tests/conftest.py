import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from tnconf.core import SpectralParams, TnConfiguration

settings.register_profile("ci", max_examples=60, deadline=None, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance lines, printed in the terminal summary
ACCEPTANCE = []


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE.append((number, f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
                               + (f" ({detail})" if detail else "")))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


DIAG_POINTS = np.array([np.diag(d) for d in [(2, 0), (1, 2), (-1, 1), (0, -1)]], dtype=float)
DIAG_LEGS = np.array([np.diag(d) for d in [(1, 0), (0, 1), (-1, 0), (0, -1)]], dtype=float)


@pytest.fixture
def diag_points():
    return DIAG_POINTS.copy()


@pytest.fixture
def diag_params():
    return SpectralParams(16.0, np.array([1.0, 2.0, 4.0, 8.0]) / 15.0)


@pytest.fixture
def diag_config():
    return TnConfiguration(DIAG_POINTS.copy(), np.zeros((2, 2)), DIAG_LEGS.copy(), np.full(4, 2.0))


@pytest.fixture
def diag_config_32():
    """The diagonal T4 embedded in 3x2 matrices with zero third rows."""
    pad = lambda A: np.concatenate([A, np.zeros(A.shape[:-2] + (1, 2))], axis=-2)
    return TnConfiguration(pad(DIAG_POINTS), np.zeros((3, 2)), pad(DIAG_LEGS), np.full(4, 2.0))


@pytest.fixture
def fixture_path():
    return FIXTURES / "diagonal_t4.json"
