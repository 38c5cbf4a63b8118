import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, ridge=0.5):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + ridge * np.eye(n)
