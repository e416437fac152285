import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pspectral.graph_io import Graph  # noqa: E402

import oracles  # noqa: E402

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_graph(W):
    return Graph.from_dense(W)


@pytest.fixture
def random_graph():
    def build(seed, n, density=0.3, connected=True):
        W = oracles.random_weights(np.random.default_rng(seed), n, density, connected=connected)
        return make_graph(W), W

    return build


@pytest.fixture
def two_triangles():
    return Graph.from_edges(6, [0, 1, 0, 3, 4, 3], [1, 2, 2, 4, 5, 5])


@pytest.fixture
def four_cycle():
    return Graph.from_edges(4, [0, 1, 2, 0], [1, 2, 3, 3])
