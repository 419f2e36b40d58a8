import numpy as np
import pytest
from hypothesis import strategies as st

from mspatplus.fixtures import synthetic_region
from mspatplus.graph import from_edge_list


def random_connected_graph(rng, n, extra=None):
    """Random spanning tree plus a few extra edges."""
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)])))) for i in range(1, n)}
    extra = n // 2 if extra is None else extra
    for _ in range(extra):
        i, j = rng.choice(n, size=2, replace=False)
        pairs.add(tuple(sorted((int(i), int(j)))))
    return from_edge_list(n, sorted(pairs))


@st.composite
def connected_graphs(draw, min_n=2, max_n=12):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_connected_graph(np.random.default_rng(seed), n)


@pytest.fixture(scope="session")
def region():
    return synthetic_region()


def cycle_graph(n):
    return from_edge_list(n, [(i, (i + 1) % n) for i in range(n)])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
