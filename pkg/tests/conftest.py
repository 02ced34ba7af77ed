import numpy as np
import pytest

from exactkm import DataMatrix, gaussian_mixture
from exactkm import kernels as K
from exactkm.core import CentroidState

# lines emitted by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def blobs():
    return gaussian_mixture(400, 3, 6, seed=5)


def matrix(rows) -> DataMatrix:
    return DataMatrix.from_array(np.asarray(rows, dtype=np.float64).reshape(len(rows), -1))


def drive(strategy, centroid_sequence):
    """Step a strategy through an explicit centroid sequence, bypassing the update step.

    Returns the assignment-step distance count of every round after round 0.
    """
    X = strategy.X
    n, k = X.shape[0], strategy.k
    cs = CentroidState.from_array(centroid_sequence[0])
    a = np.zeros(n, dtype=np.int64)
    strategy.initialize(cs, a)
    D = np.sqrt(((X[:, None, :] - cs.centroids[None]) ** 2).sum(axis=2))
    a[:] = np.argmin(D, axis=1)
    strategy.init_rows(0, n, D)
    counts = []
    prev = cs
    for t, C in enumerate(centroid_sequence[1:], start=1):
        C = np.asarray(C, dtype=np.float64)
        p = np.sqrt(((C - prev.centroids) ** 2).sum(axis=1))
        cs = CentroidState.from_array(C, p)
        strategy.begin_round(t, cs)
        strategy.prepare_chunk(0, n)
        strategy.end_prepare()
        cnt = np.zeros(K.N_COUNTERS, dtype=np.int64)
        strategy.assign_chunk(0, n, cnt)
        counts.append(int(cnt[K.ASSIGN]))
        prev = cs
    return counts
