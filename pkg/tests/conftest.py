import itertools
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def reachability_has_cycle(n: int, edges) -> bool:
    """Oracle: a digraph has a cycle iff some node reaches itself in the
    transitive closure (boolean matrix powers)."""
    a = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        a[u, v] = True
    reach = a.copy()
    for _ in range(n):
        reach = reach | (reach.astype(int) @ a.astype(int) > 0)
    return bool(np.any(np.diag(reach)))


def all_digraphs(n: int):
    """Every edge subset of the n*(n-1) ordered pairs plus self-loops."""
    pairs = [(u, v) for u in range(n) for v in range(n)]
    for mask in range(1 << len(pairs)):
        yield [p for i, p in enumerate(pairs) if mask >> i & 1]


def all_loopless_digraphs(n: int):
    pairs = [(u, v) for u, v in itertools.permutations(range(n), 2)]
    for mask in range(1 << len(pairs)):
        yield [p for i, p in enumerate(pairs) if mask >> i & 1]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
