"""Decentralized predictive control for cooperative payload transport by
underwater vehicle-manipulator teams."""
from ._kernels import BACKEND_NAME
from .errors import (IllConditioned, IsolationViolation, NearSingular, OutOfFreeSpace,
                     RepresentationSingularity, ScenarioError, UvmsError)
from .grasp import GraspGeometry, LoadSharing
from .navfun import NavFunConfig
from .nmpc import AgentController, NmpcConfig
from .object_model import ObjectParams, ObjectState, default_object_params
from .scenario import Scenario, default_scenario, load_scenario
from .sim import run_closed_loop
from .uvms_model import JointState, UvmsParams, default_uvms_params
from .world import SphereWorld, default_world

__version__ = "0.1.0"
