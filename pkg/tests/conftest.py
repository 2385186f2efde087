import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from almostflat.complex import build_complex, circle_cycle, torus_grid
from almostflat.presentation import presentation

settings.register_profile("ci", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torus3():
    return torus_grid(3)


@pytest.fixture(scope="session")
def torus_pres(torus3):
    return presentation(torus3)


@pytest.fixture(scope="session")
def triangle():
    return build_complex([(0, 1, 2)])


@pytest.fixture(scope="session")
def hollow3():
    return circle_cycle(3)
