import math

import numpy as np
import pytest

from qpbo import make_basis, make_field

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def desk_basis():
    return make_basis([1.0, SQRT2], 32)


@pytest.fixture
def small_basis():
    return make_basis([1.0, SQRT2], 8)


@pytest.fixture
def two_cosine(desk_basis):
    return make_field(desk_basis, [((1, 0), 0.5), ((0, 1), 0.5)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
