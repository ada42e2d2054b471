from importlib import resources

import numpy as np
import pytest

from batchnet.data import generate_synthetic
from batchnet.evaluation import prepare_split


def resource(name):
    return resources.files("batchnet") / "resources" / name


@pytest.fixture(scope="session")
def benchmark_data():
    return generate_synthetic(seed=1, n=500, positive_fraction=0.8)


@pytest.fixture(scope="session")
def benchmark_split(benchmark_data):
    split, _ = prepare_split(benchmark_data, seed=1)
    return split


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
