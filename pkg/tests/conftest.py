import math

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def match_centroids(centroids, planted, tol=1.5):
    """Greedy one-to-one matching by distance; returns number of matches."""
    pairs = sorted(
        (math.hypot(c[0] - p[0], c[1] - p[1]), i, j)
        for i, c in enumerate(centroids)
        for j, p in enumerate(planted)
    )
    used_c, used_p, n = set(), set(), 0
    for d, i, j in pairs:
        if d > tol:
            break
        if i in used_c or j in used_p:
            continue
        used_c.add(i)
        used_p.add(j)
        n += 1
    return n
