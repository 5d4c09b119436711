import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def centered_dft_matrix(n):
    """Explicit centered unitary DFT matrix: X[k] = sum_x x[x] exp(-2 pi i (k-c)(x-c)/n) / sqrt(n)."""
    c = n // 2
    k = np.arange(n) - c
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
