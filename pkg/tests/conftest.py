import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_binary(rng, n, m, p=0.5):
    return (rng.random((n, m)) < p).astype(np.uint8)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Collects one summary line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
