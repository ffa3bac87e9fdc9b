import numpy as np
import pytest

from signmf.simulation import SimConfig, random_signatures, simulate_dataset


@pytest.fixture(scope="session")
def signatures():
    return random_signatures(30, seed=2024)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def planted(rng, N, M, K, scale=50.0):
    W = rng.uniform(0.5, 2.0, size=(N, K)) * scale
    H = rng.dirichlet(np.ones(M), size=K)
    return W, H


@pytest.fixture(scope="session")
def poisson_sim(signatures):
    return simulate_dataset(SimConfig(20, 5, signatures, noise="poisson", seed=7))


@pytest.fixture(scope="session")
def nb10_sim(signatures):
    return simulate_dataset(SimConfig(20, 5, signatures, noise="nb", alpha=10.0, seed=7))
