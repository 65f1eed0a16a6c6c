"""Shared helpers and oracles for the test suite."""

import numpy as np
import pytest
from hypothesis import settings

from goalrec.gridworld import GridMap

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def grid(rows, name="t"):
    """Map from strings: '.' passable, '@' blocked."""
    return GridMap([[ch == "." for ch in row] for row in rows], name=name)


def empty(h, w, name="empty"):
    return GridMap(np.ones((h, w), dtype=bool), name=name)


def random_grid(rng, h, w, density=0.25, name="rand"):
    passable = rng.random((h, w)) >= density
    if not passable.any():
        passable[0, 0] = True
    return GridMap(passable, name=name)


def floyd_warshall(m, step=None):
    """All-pairs shortest paths over the 4-connected cell graph.

    ``step(a, b)`` gives the directed move cost (1 by default). Returns an
    (n, n) matrix indexed by flat cell index, source first.
    """
    h, w = m.shape
    n = h * w
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for r in range(h):
        for c in range(w):
            if not m.passable[r, c]:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and m.passable[rr, cc]:
                    d[r * w + c, rr * w + cc] = 1.0 if step is None else step((r, c), (rr, cc))
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
