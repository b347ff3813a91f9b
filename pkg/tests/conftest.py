import numpy as np
import pytest

from mixsca.synth import SimConfig, simulate


@pytest.fixture(scope="session")
def noiseless_set():
    return simulate(SimConfig(n_traces=2000, noise_sigma=0.0, seed=11, role="attack"))


@pytest.fixture(scope="session")
def noisy_set():
    return simulate(SimConfig(n_traces=2000, noise_sigma=1.0, seed=12, role="attack"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
