"""Rigid payload dynamics.

The object twist is expressed in the inertial frame (linear velocity of the
centre of mass, then angular velocity); the pose is position plus ZYX Euler
angles, whose rate follows from the inverse Euler-rate map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .spatial import PITCH_EPS, Pose6, Twist, euler_rate_jacobian_inv


@dataclass(frozen=True)
class ObjectParams:
    mass_matrix: np.ndarray            # 6x6 body-frame inertia incl. added mass
    linear_damping: np.ndarray         # 6x6
    quadratic_damping: np.ndarray      # 6
    net_restoring: float = 0.0         # weight minus buoyancy [N]
    restoring_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bounding_radius: float = 0.6

    def __post_init__(self):
        M = np.asarray(self.mass_matrix, dtype=float).reshape(6, 6)
        if not np.allclose(M, M.T, atol=1e-12) or np.linalg.eigvalsh(M)[0] <= 0:
            raise ValueError("object mass matrix must be symmetric positive definite")
        Dl = np.asarray(self.linear_damping, dtype=float)
        if Dl.ndim == 1:
            Dl = np.diag(Dl)
        object.__setattr__(self, "mass_matrix", M)
        object.__setattr__(self, "linear_damping", Dl.reshape(6, 6))
        object.__setattr__(self, "quadratic_damping",
                           np.asarray(self.quadratic_damping, dtype=float).reshape(6))
        object.__setattr__(self, "restoring_offset",
                           np.asarray(self.restoring_offset, dtype=float).reshape(3))
        if self.bounding_radius <= 0:
            raise ValueError("bounding_radius must be positive")

    @cached_property
    def _kernel_cache(self):
        return {}

    def kernel(self, backend=None):
        be = backend or _kernels.backend
        ko = self._kernel_cache.get(be.NAME)
        if ko is None:
            ko = be.KernelObject(self.mass_matrix, self.linear_damping, self.quadratic_damping,
                                 self.net_restoring, self.restoring_offset)
            self._kernel_cache[be.NAME] = ko
        return ko


@dataclass
class ObjectState:
    pose: Pose6
    twist: Twist = field(default_factory=Twist)

    @classmethod
    def from_vectors(cls, x, v=None):
        return cls(Pose6.from_vector(x), Twist() if v is None else Twist.from_vector(v))


def object_terms(params: ObjectParams, state: ObjectState, backend=None):
    """(M_O, C_O v, D_O v, g_O) in inertial coordinates."""
    be = backend or _kernels.backend
    return be.object_terms(params.kernel(be), state.pose.as_vector(), state.twist.as_vector())


def object_pose_rate(state: ObjectState, eps=PITCH_EPS) -> np.ndarray:
    """Pose rate [position rate; Euler rates] from the inertial twist."""
    return euler_rate_jacobian_inv(state.pose.euler, eps) @ state.twist.as_vector()


def uniform_bar(mass, length, radius, axis=1, added_mass_coeff=1.0, fluid_density=1000.0):
    """Body inertia of a slender cylinder with its axis along body ``axis``.

    Added mass is the strip-theory value for motion across the axis and zero
    along it; rotational added inertia follows from the same strip integral.
    """
    ia = 0.5 * mass * radius ** 2
    it = mass * (3 * radius ** 2 + length ** 2) / 12.0
    ma = added_mass_coeff * fluid_density * np.pi * radius ** 2 * length
    lin = np.full(3, mass + ma)
    lin[axis] = mass
    rot = np.full(3, it + ma * length ** 2 / 12.0)
    rot[axis] = ia
    return np.diag(np.concatenate([lin, rot]))


def default_object_params() -> ObjectParams:
    """Placeholder 1.6 m bar lying along its body y axis."""
    M = uniform_bar(6.0, 1.6, 0.05, axis=1)
    M[4, 4] += 0.05  # grip hardware about the bar axis
    return ObjectParams(
        mass_matrix=M,
        linear_damping=np.diag([6.0, 2.0, 6.0, 3.0, 0.5, 3.0]),
        quadratic_damping=np.array([6.0, 2.0, 6.0, 2.0, 0.5, 2.0]),
        net_restoring=1.0,
        restoring_offset=np.zeros(3),
        bounding_radius=0.6,
    )
