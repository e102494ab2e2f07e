import numpy as np
import pytest

from tests.helpers import make_box


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def box():
    return make_box()
