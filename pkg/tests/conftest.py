import json
from pathlib import Path

import numpy as np
import pytest

from pseudomode.correlation import SpectralDensityModel
from pseudomode.dynamics import SystemSpec

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def golden():
    return json.loads((DATA / "golden.json").read_text())


@pytest.fixture(scope="session")
def sd_b():
    """Strong-coupling, narrow-bath point with omega0 = 0.5."""
    return SpectralDensityModel(alpha=0.25, omega0=0.5, gamma_width=0.05, beta=1.0)


@pytest.fixture(scope="session")
def tls():
    return SystemSpec(epsilon=0.5, delta_x=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""

    def emit(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
