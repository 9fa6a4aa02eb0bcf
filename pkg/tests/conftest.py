import numpy as np
import pytest

from manetcast.geometry import build_static_graph

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def path_graph(n: int, spacing: float = 200.0, tx_range: float = 250.0):
    return build_static_graph([(i * spacing, 0.0) for i in range(n)], tx_range)
