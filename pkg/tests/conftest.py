import numpy as np
import pytest

from sgdlab.data import ChiDistribution, sample_chi_dataset


@pytest.fixture
def small_dataset():
    return sample_chi_dataset(ChiDistribution(chi=0.0, d=8), 48, seed=101)


@pytest.fixture
def rng():
    return np.random.default_rng(20240)
