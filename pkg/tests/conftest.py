import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fluidq.distributions import make_distribution

settings.register_profile(
    "default",
    max_examples=int(os.environ.get("FLUIDQ_HYPOTHESIS_EXAMPLES", "25")),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def exp_service():
    return make_distribution("exponential", {"rate": 1.0}, "service")


@pytest.fixture(scope="session")
def exp_patience():
    return make_distribution("exponential", {"rate": 1.0}, "patience")


@pytest.fixture(scope="session")
def weibull_half():
    return make_distribution("weibull", {"shape": 0.5}, "service")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
