"""Rigid-grasp coupling between the agents' end effectors and the payload.

Agent ``i`` holds the object at body-frame offset ``l_i`` with a constant Euler
offset ``alpha_i``. With ``r_i = R_O l_i`` the inertial lever arm, rigid-body
kinematics give

    v_i = J_Oi v_O,   J_Oi = [[I, -S(r_i)], [0, I]]
    v_O = J_iO v_i,   J_iO = [[I,  S(r_i)], [0, I]]

and the object feels the end-effector wrenches through ``G^T`` with
``G = [J_O1; ...; J_ON]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import IllConditioned, NearSingular, RepresentationSingularity
from .object_model import ObjectParams, ObjectState, object_terms
from .spatial import (Pose6, Twist, euler_to_rotation, rotation_to_euler, skew,
                      wrap_angle)
from .uvms_model import EPS_SING, JointState, UvmsParams, task_space_terms

COND_MAX = 1e12


@dataclass(frozen=True)
class GraspGeometry:
    offsets: np.ndarray     # N x 3, object frame
    alphas: np.ndarray      # N x 3, Euler offsets [rad]
    agent_radius: float = 1.0

    def __post_init__(self):
        l = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        a = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        if l.shape[1] != 3 or a.shape != l.shape:
            raise ValueError("offsets and alphas must both be N x 3")
        object.__setattr__(self, "offsets", l)
        object.__setattr__(self, "alphas", a)

    @property
    def n_agents(self) -> int:
        return self.offsets.shape[0]

    def separation_diagnostics(self):
        """Pairs of grasp points closer than twice the agent radius."""
        out = []
        for i in range(self.n_agents):
            for j in range(i + 1, self.n_agents):
                d = float(np.linalg.norm(self.offsets[i] - self.offsets[j]))
                if d < 2 * self.agent_radius:
                    out.append((i, j, d))
        return out

    def warn_separation(self):
        for i, j, d in self.separation_diagnostics():
            warnings.warn(f"grasp points {i} and {j} are {d:.3f} m apart, less than twice "
                          f"the agent radius {self.agent_radius}", stacklevel=2)


@dataclass(frozen=True)
class LoadSharing:
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if np.any(c <= 0) or (c.size > 1 and np.any(c >= 1)):
            raise ValueError(f"load-sharing coefficients must lie in (0, 1), got {c.tolist()}")
        if abs(c.sum() - 1.0) > 1e-12:
            raise ValueError(f"load-sharing coefficients must sum to 1, got sum {c.sum():.12g}")
        object.__setattr__(self, "c", c)

    def __getitem__(self, i):
        return float(self.c[i])


def _pose_vec(p):
    return p.as_vector() if isinstance(p, Pose6) else np.asarray(p, dtype=float).reshape(6)


def lever_arm(geom: GraspGeometry, i: int, attitude) -> np.ndarray:
    """Inertial vector from object centre to grasp point ``i``."""
    return euler_to_rotation(attitude) @ geom.offsets[i]


def end_effector_target(object_pose, geom: GraspGeometry, i: int) -> Pose6:
    """End-effector pose that holds the object at ``object_pose``.

    The Euler offset is added componentwise and wrapped.
    """
    x = _pose_vec(object_pose)
    return Pose6(x[:3] + lever_arm(geom, i, x[3:]), wrap_angle(x[3:] + geom.alphas[i]))


def object_coupling_jacobian(geom: GraspGeometry, i: int, attitude=(0.0, 0.0, 0.0)):
    """(J_iO, J_Oi): end-effector twist to object twist and back."""
    S = skew(lever_arm(geom, i, attitude))
    JiO = np.eye(6)
    JiO[:3, 3:] = S
    JOi = np.eye(6)
    JOi[:3, 3:] = -S
    return JiO, JOi


def coupling_jacobian_rate_times(r, omega):
    """(dJ_iO/dt) v_i and (dJ_Oi/dt) v_O for a rigid grasp rotating at ``omega``."""
    rdot = np.cross(omega, r)
    a = np.concatenate([np.cross(rdot, omega), np.zeros(3)])
    return a, -a


def grasp_matrix(geom: GraspGeometry, attitude) -> np.ndarray:
    """6N x 6 stack of J_Oi."""
    return np.vstack([object_coupling_jacobian(geom, i, attitude)[1]
                      for i in range(geom.n_agents)])


def reconstruct_object_state(agent_pose, agent_twist, geom: GraspGeometry, i: int,
                             pitch_eps=0.0) -> ObjectState:
    """Object pose and twist from one agent's end-effector pose and twist."""
    p = _pose_vec(agent_pose)
    v = agent_twist.as_vector() if isinstance(agent_twist, Twist) else np.asarray(agent_twist, float)
    eta = wrap_angle(p[3:] - geom.alphas[i])
    if abs(eta[1]) >= np.pi / 2 - pitch_eps:
        raise RepresentationSingularity(f"reconstructed object pitch {eta[1]:.4f} rad")
    JiO, _ = object_coupling_jacobian(geom, i, eta)
    r = lever_arm(geom, i, eta)
    return ObjectState(Pose6(p[:3] - r, eta), Twist.from_vector(JiO @ v))


def agent_object_state(params: UvmsParams, state: JointState, geom: GraspGeometry, i: int,
                       backend=None) -> ObjectState:
    """Object state as measured through agent ``i``'s own kinematics."""
    be = backend or _kernels.backend
    p, R, J = be.ee_kinematics(params.kernel(be), state.q)
    pose = np.concatenate([p, rotation_to_euler(R)])
    return reconstruct_object_state(pose, J @ state.qdot, geom, i)


def coupled_terms(agent_params, agent_states, obj_params: ObjectParams, obj_state: ObjectState,
                  geom: GraspGeometry, eps_sing=EPS_SING):
    """Object-space dynamics of the whole team, (M, C v_O, D v_O, g).

    Each agent's end-effector dynamics are pulled onto the object through J_Oi.
    """
    M, Cv, Dv, g = (a.copy() for a in object_terms(obj_params, obj_state))
    vO = obj_state.twist.as_vector()
    w = vO[3:]
    eta = obj_state.pose.euler
    for i, (prm, st) in enumerate(zip(agent_params, agent_states)):
        Lam, Ci, Di, gi = task_space_terms(prm, st, eps_sing)
        _, JOi = object_coupling_jacobian(geom, i, eta)
        _, JOid_v = coupling_jacobian_rate_times(lever_arm(geom, i, eta), w)
        M += JOi.T @ Lam @ JOi
        Cv += JOi.T @ (Lam @ JOid_v + Ci)
        Dv += JOi.T @ Di
        g += JOi.T @ gi
    return 0.5 * (M + M.T), Cv, Dv, g


def _joint_and_task(params, state, eps_sing, backend=None):
    be = backend or _kernels.backend
    M, Cqd, Dqd, g, J, Jdot, p, R, tau0 = be.joint_terms(params.kernel(be), state.q, state.qdot)
    det = float(np.linalg.det(J @ J.T))
    if not det > eps_sing:
        raise NearSingular(f"det(J J^T) = {det:.3e} <= {eps_sing:.1e}")
    Y = np.linalg.solve(M, J.T)
    Lam = np.linalg.inv(J @ Y)
    Lam = 0.5 * (Lam + Lam.T)
    Jdqd = Jdot @ state.qdot
    return dict(J=J, Jdqd=Jdqd, Lam=Lam, Ci=Lam @ (Y.T @ Cqd - Jdqd), Di=Lam @ (Y.T @ Dqd),
                gi=Lam @ (Y.T @ g), p=p, R=R, tau0=tau0)


def distributed_terms(params: UvmsParams, state: JointState, obj_params: ObjectParams,
                      geom: GraspGeometry, i: int, c_i: float, obj_state: ObjectState = None,
                      compensated=False, eps_sing=EPS_SING):
    """Agent ``i``'s share of the team dynamics in its own joint space.

    Returns (Mt 6 x n, Ct qdot, Dt qdot, gt). The object state defaults to the
    agent's own reconstruction. With ``compensated`` the agent's restoring term
    is dropped from gt, for use when the applied torque already cancels it.
    """
    t = _joint_and_task(params, state, eps_sing)
    if obj_state is None:
        vi = t["J"] @ state.qdot
        obj_state = reconstruct_object_state(np.concatenate([t["p"], rotation_to_euler(t["R"])]),
                                             vi, geom, i)
    eta = obj_state.pose.euler
    JiO, JOi = object_coupling_jacobian(geom, i, eta)
    vi = t["J"] @ state.qdot
    JiOd_v, _ = coupling_jacobian_rate_times(lever_arm(geom, i, eta), vi[3:])
    MO, COv, DOv, gO = object_terms(obj_params, obj_state)
    Lam = t["Lam"]
    Mt = (c_i * MO @ JiO + JOi.T @ Lam) @ t["J"]
    Ct = c_i * (MO @ (JiO @ t["Jdqd"]) + MO @ JiOd_v + COv) + JOi.T @ (Lam @ t["Jdqd"] + t["Ci"])
    Dt = c_i * DOv + JOi.T @ t["Di"]
    gt = c_i * gO if compensated else c_i * gO + JOi.T @ t["gi"]
    return Mt, Ct, Dt, gt


def right_pseudo_inverse(A, cond_max=COND_MAX):
    AAt = A @ A.T
    c = np.linalg.cond(AAt)
    if not c <= cond_max:
        raise IllConditioned(f"cond(A A^T) = {c:.3e} exceeds {cond_max:.1e}")
    return A.T @ np.linalg.inv(AAt)


def agent_flow(params: UvmsParams, state: JointState, u, obj_params: ObjectParams,
               geom: GraspGeometry, i: int, c_i: float, compensated=False,
               eps_sing=EPS_SING, cond_max=COND_MAX) -> np.ndarray:
    """[qdot; qddot] of agent ``i``'s local model of the cooperative system."""
    u = u.as_vector() if hasattr(u, "as_vector") else np.asarray(u, dtype=float).reshape(6)
    Mt, Ct, Dt, gt = distributed_terms(params, state, obj_params, geom, i, c_i,
                                       compensated=compensated, eps_sing=eps_sing)
    eta = agent_object_state(params, state, geom, i).pose.euler
    _, JOi = object_coupling_jacobian(geom, i, eta)
    qdd = right_pseudo_inverse(Mt, cond_max) @ (JOi.T @ u - Ct - Dt - gt)
    return np.concatenate([state.qdot, qdd])
