import numpy as np
import pytest

from wgf.network import standard_gaussian


@pytest.fixture(scope="session")
def gaussian_ref():
    return standard_gaussian()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
