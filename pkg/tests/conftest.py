import numpy as np
import pytest

from n2n.graph import Graph


def random_graph(rng, n, p):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    src, dst = np.nonzero(upper)
    return Graph.from_edges(src, dst, num_nodes=n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path4():
    return Graph.from_edges([0, 1, 2], [1, 2, 3])


@pytest.fixture
def small_graph(rng):
    return random_graph(rng, 30, 0.15)


# lines recorded by test_acceptance.py, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[1]), s)):
            terminalreporter.write_line(line)
