import random

import pytest

from tmsched.combinatorics import ConflictGraph


def random_graph(rng: random.Random, nv: int, p: float) -> ConflictGraph:
    edges = [(u, v) for u in range(nv) for v in range(u + 1, nv) if rng.random() < p]
    return ConflictGraph.from_edges(range(nv), edges)


@pytest.fixture
def rng():
    return random.Random(20240611)


ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS.values():
        terminalreporter.write_line(line)
