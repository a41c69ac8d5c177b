import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uvms_transport.grasp import GraspGeometry
from uvms_transport.object_model import default_object_params
from uvms_transport.uvms_model import default_uvms_params

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return default_uvms_params()


@pytest.fixture(scope="session")
def obj_params():
    return default_object_params()


@pytest.fixture(scope="session")
def pair_geometry():
    return GraspGeometry([[0.0, 0.6, 0.0], [0.0, -0.6, 0.0]], np.zeros((2, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
