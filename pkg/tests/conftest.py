import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def random_adjacency(rng, n, K, p=0.5):
    A = np.zeros((K, n, n), dtype=np.uint8)
    iu = np.triu_indices(n, 1)
    for k in range(K):
        A[k][iu] = rng.random(iu[0].size) < p
        A[k] = A[k] + A[k].T
    return A


def random_probability(rng, n, K):
    P = rng.random((K, n, n))
    P = np.triu(P, 1)
    return P + np.swapaxes(P, 1, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items()
                if name.endswith("test_acceptance") and hasattr(m, "summary_lines")), None)
    lines = mod.summary_lines() if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
