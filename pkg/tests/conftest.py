import numpy as np
import pytest

from regmor.synthetic import four_element_partition


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def four_partition():
    return four_element_partition()
