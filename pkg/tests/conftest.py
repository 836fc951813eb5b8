import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from multivariance.cndf import CndfSpec

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile("default")

FAMILIES = [
    CndfSpec.euclidean(),
    CndfSpec.stable(0.5),
    CndfSpec.stable(1.5),
    CndfSpec.minkowski(1.5),
    CndfSpec.bounded_exp(0.8),
]


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
