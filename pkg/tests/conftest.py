import numpy as np
import pytest

from adasprt import Prior, WorkerParams, gen_worker_pool


@pytest.fixture
def symmetric_worker():
    return WorkerParams(0.8, 0.8)


@pytest.fixture
def even_prior():
    return Prior(0.5)


@pytest.fixture(scope="session")
def pool50():
    """The 50-worker circle-arc pool used by the larger experiments."""
    return tuple(gen_worker_pool(50, seed=1234))


def random_worker(rng: np.random.Generator, lo: float = 0.05, hi: float = 0.95) -> WorkerParams:
    return WorkerParams(float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)))
