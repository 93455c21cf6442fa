import numpy as np
import pytest

from diamond.system import sine_gordon


@pytest.fixture
def sg():
    return sine_gordon()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
