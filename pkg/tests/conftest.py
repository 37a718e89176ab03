import numpy as np
import pytest

from quadnls import make_grid, solve_ground_state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def gs5_2048():
    return solve_ground_state(5, 1.0, 1.0, make_grid(5, 16.0, 2048))


@pytest.fixture(scope="session")
def gs5_512():
    return solve_ground_state(5, 1.0, 1.0, make_grid(5, 12.0, 512))


@pytest.fixture(scope="session")
def gs4_2048():
    return solve_ground_state(4, 1.0, 1.0, make_grid(4, 16.0, 2048))
