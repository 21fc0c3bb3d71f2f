import numpy as np
import pytest

from shrinkwire.graph import WeightedGraph

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def random_graph(rng, n, p=0.4, connected=True, wmin=0.5, wmax=2.0):
    """Random undirected graph; a spanning path is added when ``connected``."""
    edges = {}
    if connected:
        order = rng.permutation(n)
        for a, b in zip(order[:-1], order[1:]):
            edges[(min(a, b), max(a, b))] = rng.uniform(wmin, wmax)
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < p:
                edges[(i, j)] = rng.uniform(wmin, wmax)
    return WeightedGraph(n, False, tuple((i, j, w) for (i, j), w in edges.items()))


def non_edges(g):
    return [(i, j) for i in range(g.n) for j in range(i + 1, g.n) if not g.has_edge(i, j)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
