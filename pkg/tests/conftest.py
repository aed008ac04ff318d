import numpy as np
import pytest

from mmdquant.checks import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_points():
    """Random sorted distinct points with a minimum gap."""
    def make(rng, n, lo=-3.0, hi=3.0, min_gap=0.05):
        return random_instance(rng, n, None, lo, hi, min_gap)
    return make
