import numpy as np
import pytest

from diffalloc.netcore import build_network, complete_network

ACCEPTANCE_LINES: list[str] = []


def random_complete(rng, m, lo=1.0, hi=5.0):
    return complete_network(rng.uniform(lo, hi, m), rng.uniform(lo, hi, (m, m)))


def random_sparse(rng, m, p=0.5, lo=1.0, hi=5.0):
    """Random network that keeps every individual edge and a random subset of pairs."""
    entries = [((0, i), rng.uniform(lo, hi)) for i in range(1, m + 1)]
    for i in range(1, m + 1):
        for j in range(i + 1, m + 1):
            if rng.random() < p:
                entries.append(((i, j), rng.uniform(lo, hi)))
    return build_network(m, entries)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain2():
    # s_1 = 1, s_12 = 1, s_2 = 10
    return build_network(2, [((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 10.0)])


@pytest.fixture
def sym2():
    return build_network(2, [((0, 1), 1.0), ((0, 2), 1.0), ((1, 2), 1.0)])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
