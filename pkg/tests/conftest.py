import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from gridlearn.graph import WeightedGraph

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@st.composite
def connected_graphs(draw, min_nodes=2, max_nodes=15, max_extra=20):
    """Random spanning tree plus a few extra edges, positive weights."""
    n = draw(st.integers(min_nodes, max_nodes))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    pairs = {(p, i) for i, p in zip(range(1, n), parents)}
    if n > 2:
        extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=max_extra))
        pairs |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    pairs = sorted(pairs)
    weights = draw(st.lists(st.floats(0.05, 20.0), min_size=len(pairs), max_size=len(pairs)))
    s, t = zip(*pairs)
    return WeightedGraph.from_arrays(n, s, t, weights)
