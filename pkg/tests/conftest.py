import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thinshell.grid import make_shell_grid, make_sphere_grid

settings.register_profile(
    "thinshell",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("thinshell")


@pytest.fixture(scope="session")
def grid8():
    return make_sphere_grid(8)


@pytest.fixture(scope="session")
def shell8(grid8):
    return make_shell_grid(grid8, 0.1, 10, "gauss")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
