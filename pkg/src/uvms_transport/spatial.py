"""Rotations, Euler-rate maps, skew operators and pose arithmetic.

Euler angles are (roll, pitch, yaw) composed in ZYX order, R = Rz(yaw) Ry(pitch) Rx(roll).
Angular velocities are expressed in the inertial frame.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import RepresentationSingularity

PITCH_EPS = 0.05


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def euler_to_rotation(euler):
    phi, theta, psi = np.asarray(euler, dtype=float)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def rotation_to_euler(R):
    """Inverse of :func:`euler_to_rotation` on the branch |pitch| <= pi/2."""
    R = np.asarray(R, dtype=float)
    theta = np.arctan2(-R[2, 0], np.hypot(R[0, 0], R[1, 0]))
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return wrap_angle(np.array([phi, theta, psi]))


def angular_rate_matrix(euler):
    """E(euler) with omega = E @ euler_dot (omega in the inertial frame)."""
    _, theta, psi = np.asarray(euler, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, -sp, 0.0],
        [sp * ct, cp, 0.0],
        [-st, 0.0, 1.0],
    ])


def _check_pitch(theta, eps):
    if abs(theta) >= np.pi / 2 - eps:
        raise RepresentationSingularity(
            f"pitch {theta:.6f} rad is within {eps} rad of the Euler-rate singularity")


def euler_rate_jacobian(euler, eps=PITCH_EPS):
    """6x6 map from [position rate; Euler rates] to [linear velocity; omega]."""
    euler = np.asarray(euler, dtype=float)
    _check_pitch(euler[1], eps)
    out = np.eye(6)
    out[3:, 3:] = angular_rate_matrix(euler)
    return out


def euler_rate_jacobian_inv(euler, eps=PITCH_EPS):
    euler = np.asarray(euler, dtype=float)
    _check_pitch(euler[1], eps)
    _, theta, psi = euler
    ct, tt = np.cos(theta), np.tan(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    out = np.eye(6)
    out[3:, 3:] = [
        [cp / ct, sp / ct, 0.0],
        [-sp, cp, 0.0],
        [cp * tt, sp * tt, 1.0],
    ]
    return out


def skew(v):
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_error(Ra, Rb):
    """Small-angle rotation vector (inertial frame) taking Rb to Ra."""
    E = np.asarray(Ra) @ np.asarray(Rb).T
    return 0.5 * np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])


@dataclass
class Pose6:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.euler = wrap_angle(np.asarray(self.euler, dtype=float).reshape(3))

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])

    def as_vector(self):
        return np.concatenate([self.position, self.euler])

    @property
    def rotation(self):
        return euler_to_rotation(self.euler)


@dataclass
class Twist:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(3)
        self.angular = np.asarray(self.angular, dtype=float).reshape(3)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def as_vector(self):
        return np.concatenate([self.linear, self.angular])


@dataclass
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.torque = np.asarray(self.torque, dtype=float).reshape(3)

    @classmethod
    def from_vector(cls, w):
        w = np.asarray(w, dtype=float)
        return cls(w[:3], w[3:6])

    def as_vector(self):
        return np.concatenate([self.force, self.torque])


def _as_pose_vector(p):
    if isinstance(p, Pose6):
        return p.as_vector()
    return np.asarray(p, dtype=float).reshape(6)


def pose_error(a, b):
    """Position difference a - b followed by per-axis wrapped Euler difference."""
    a = _as_pose_vector(a)
    b = _as_pose_vector(b)
    return np.concatenate([a[:3] - b[:3], wrap_angle(a[3:] - b[3:])])
