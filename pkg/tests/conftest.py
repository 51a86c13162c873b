import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gliomapipe.data import PhantomSpec, generate_phantom  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Collect one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, description, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {description}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def phantom():
    spec = PhantomSpec(seed=3, dims=(20, 18, 16), ncr_axes=(2, 2, 2), tc_axes=(4, 4, 3),
                       wt_axes=(7, 6, 5), noise_sigma=0.05)
    return generate_phantom(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
