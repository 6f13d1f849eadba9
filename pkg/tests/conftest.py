import pytest
from hypothesis import HealthCheck, settings

from roughpert import TimeGrid
from roughpert.scenario import midpoint_path, piecewise_linear_path, rng_for

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def grid16():
    return TimeGrid.uniform(16)


@pytest.fixture
def rough_path():
    """Midpoint-displacement path in R^2 sampled on 33 points."""
    return midpoint_path(rng_for(11, 0), 2, 0.45, 32)


@pytest.fixture
def smooth_path():
    return piecewise_linear_path(rng_for(12, 0), 2, 32, 5)
