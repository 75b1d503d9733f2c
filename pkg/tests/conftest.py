import numpy as np
import pytest

from amirisk.cli import packaged_data_path
from amirisk.datamodel import load_cohort, load_mapping
from amirisk.preprocess import DesignMatrix


@pytest.fixture(scope="session")
def mapping():
    return load_mapping(packaged_data_path("ami_mapping.cfg"))


@pytest.fixture(scope="session")
def cohort(mapping):
    return load_cohort(packaged_data_path("ami_cohort.csv"), mapping)


def make_matrix(X, y, columns=None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int8)
    columns = tuple(columns) if columns else tuple(f"f{i}" for i in range(X.shape[1]))
    return DesignMatrix(columns, X, y, np.arange(len(y), dtype=np.int64))


@pytest.fixture
def separable_matrix():
    rng = np.random.default_rng(42)
    X = rng.normal(size=(60, 4))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.int8)
    return make_matrix(X, y)
