import numpy as np
import pytest

from sparse_kmeans import SparseDataset, generate_synthetic
from sparse_kmeans.ingest import FIXTURE


def random_dataset(seed: int, n: int = 60, dim: int = 40, nnz: int = 6) -> SparseDataset:
    """Unit-norm rows with ``nnz`` random terms each."""
    rng = np.random.default_rng(seed)
    indptr = np.arange(n + 1, dtype=np.int64) * nnz
    indices = np.concatenate([np.sort(rng.choice(dim, size=nnz, replace=False)) for _ in range(n)])
    data = rng.random(n * nnz) + 0.05
    data /= np.repeat(np.sqrt(np.add.reduceat(data * data, indptr[:-1])), nnz)
    return SparseDataset(indptr, indices.astype(np.int64), data, dim)


@pytest.fixture(scope="session")
def fixture_data():
    X, labels = generate_synthetic(FIXTURE)
    return X


@pytest.fixture
def make_dataset():
    return random_dataset


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS, record
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(record(n, RESULTS[n]))
