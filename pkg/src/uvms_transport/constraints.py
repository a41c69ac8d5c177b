"""State and input constraint sets as signed margins (positive = satisfied)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grasp import GraspGeometry
from .spatial import PITCH_EPS, rotation_to_euler, wrap_angle
from .uvms_model import EPS_SING, JointState, UvmsParams

INTERIOR_WEIGHT = 1e3
BOX_WEIGHT = 1e2


@dataclass(frozen=True)
class StateConstraintSet:
    pitch_eps: float
    eps_sing: float
    joint_position_bounds: np.ndarray   # arm joints
    velocity_bounds: np.ndarray          # all generalized rates

    @classmethod
    def from_params(cls, params: UvmsParams, pitch_eps=PITCH_EPS, eps_sing=EPS_SING, scale=1.0):
        """Bounds from the model; ``scale`` < 1 tightens the box constraints."""
        return cls(pitch_eps, eps_sing, scale * params.joint_position_bounds,
                   scale * params.velocity_bound_vector())

    def __post_init__(self):
        vals = np.concatenate([[self.pitch_eps, self.eps_sing],
                               np.ravel(self.joint_position_bounds), np.ravel(self.velocity_bounds)])
        if np.any(vals <= 0):
            raise ValueError("constraint bounds must be positive")

    def labels(self):
        na, n = len(self.joint_position_bounds), len(self.velocity_bounds)
        return (["object_pitch", "singularity"] + [f"joint_pos_{j}" for j in range(na)]
                + [f"vel_{j}" for j in range(n)])

    def weights(self, interior=INTERIOR_WEIGHT, box=BOX_WEIGHT):
        na, n = len(self.joint_position_bounds), len(self.velocity_bounds)
        return np.concatenate([[interior, interior], np.full(na + n, box)])


@dataclass(frozen=True)
class InputConstraintSet:
    torque_bounds: np.ndarray

    @classmethod
    def from_params(cls, params: UvmsParams, scale=1.0):
        return cls(scale * params.actuation_bound_vector())

    def __post_init__(self):
        if np.any(np.asarray(self.torque_bounds) <= 0):
            raise ValueError("torque bounds must be positive")

    def weights(self, box=BOX_WEIGHT):
        return np.full(len(self.torque_bounds), box)


def state_margins_from(object_pitch, det_jjt, q, qdot, cset: StateConstraintSet):
    """Margins from precomputed quantities; q and qdot may be stacked row-wise."""
    q = np.atleast_2d(q)
    qdot = np.atleast_2d(qdot)
    na = len(cset.joint_position_bounds)
    pitch = (np.pi / 2 - cset.pitch_eps) - np.abs(np.atleast_1d(object_pitch))
    sing = np.atleast_1d(det_jjt) - cset.eps_sing
    jp = cset.joint_position_bounds - np.abs(q[:, 6:6 + na])
    vel = cset.velocity_bounds - np.abs(qdot)
    out = np.column_stack([pitch, sing, jp, vel])
    return out[0] if out.shape[0] == 1 else out


def state_violations(state: JointState, params: UvmsParams, geom: GraspGeometry, i: int,
                     cset: StateConstraintSet, backend=None) -> np.ndarray:
    """Signed margins: object pitch, det(J J^T), arm joint positions, generalized rates."""
    be = backend or _kernels.backend
    _, R, J = be.ee_kinematics(params.kernel(be), state.q)
    pitch = wrap_angle(rotation_to_euler(R) - geom.alphas[i])[1]
    det = float(np.linalg.det(J @ J.T))
    return state_margins_from(pitch, det, state.q, state.qdot, cset)


def applied_torque(u, state: JointState, params: UvmsParams, backend=None) -> np.ndarray:
    """J^T u plus the baseline torque."""
    be = backend or _kernels.backend
    M, Cqd, Dqd, g, J, Jdot, p, R, tau0 = be.joint_terms(params.kernel(be), state.q, state.qdot)
    u = u.as_vector() if hasattr(u, "as_vector") else np.asarray(u, dtype=float).reshape(6)
    return J.T @ u + tau0


def input_violations(u, state: JointState, params: UvmsParams, iset: InputConstraintSet,
                     backend=None) -> np.ndarray:
    """Per-coordinate margins of the applied generalized force."""
    return iset.torque_bounds - np.abs(applied_torque(u, state, params, backend))


def penalty(margins, weights) -> float:
    """Weighted sum of squared violations."""
    m = np.asarray(margins, dtype=float)
    w = np.broadcast_to(np.asarray(weights, dtype=float), m.shape)
    v = np.minimum(m, 0.0)
    return float(np.sum(w * v * v))
