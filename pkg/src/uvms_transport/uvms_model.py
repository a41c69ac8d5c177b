"""Per-agent kinematics and dynamics of an underwater vehicle-manipulator system.

Generalized coordinates are ``q = [vehicle position, vehicle ZYX Euler angles,
arm joint angles]``; the end-effector twist is ``v = J(q) qdot`` with linear and
angular velocity both expressed in the inertial frame. Hydrodynamics enter as
constant body-frame added mass folded into each rigid body's 6x6 inertia plus
diagonal linear and quadratic damping on the generalized rates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import DimensionError, NearSingular
from .spatial import Pose6, rotation_to_euler

EPS_SING = 1e-6


@dataclass(frozen=True)
class RigidBody:
    """A rigid body attached to frame ``frame`` (0 = vehicle, j >= 1 = after arm joint j).

    ``inertia`` is the 6x6 body-frame spatial inertia about ``com`` (rigid body
    plus added mass, ordered linear then angular). ``weight_minus_buoyancy`` acts
    at ``com`` along the inertial -z axis; a negative value models buoyancy, so a
    massless body with negative net weight is a centre of buoyancy.
    """
    frame: int
    com: np.ndarray
    inertia: np.ndarray
    weight_minus_buoyancy: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(6, 6))


def spatial_inertia(mass, inertia_diag, added_linear=(0.0, 0.0, 0.0),
                    added_angular=(0.0, 0.0, 0.0)):
    """Diagonal 6x6 body inertia with added mass."""
    m = np.asarray(added_linear, dtype=float) + mass
    i = np.asarray(inertia_diag, dtype=float) + np.asarray(added_angular, dtype=float)
    return np.diag(np.concatenate([m, i]))


@dataclass(frozen=True)
class UvmsParams:
    dh_table: np.ndarray                 # rows [a, alpha, d, theta_offset]
    base_to_arm: np.ndarray              # 4x4, vehicle frame -> arm base
    arm_to_tool: np.ndarray              # 4x4, last link frame -> end effector
    bodies: tuple
    linear_damping: np.ndarray           # n x n diagonal
    quadratic_damping: np.ndarray        # n-vector
    armature: np.ndarray                 # arm rotor inertia
    joint_position_bounds: np.ndarray    # arm joints
    joint_velocity_bounds: tuple = (0.5, 0.1, 0.1)   # vehicle linear, vehicle angular, arm
    actuation_bounds: tuple = (10.0, 2.0)            # vehicle coordinates, arm joints
    posture_home: np.ndarray = None
    posture_kp: np.ndarray = None
    posture_kd: np.ndarray = None
    jacobian_step: float = 1e-6

    def __post_init__(self):
        dh = np.asarray(self.dh_table, dtype=float).reshape(-1, 4)
        na = dh.shape[0]
        n = 6 + na
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("dh_table", dh)
        set_("base_to_arm", np.asarray(self.base_to_arm, dtype=float).reshape(4, 4))
        set_("arm_to_tool", np.asarray(self.arm_to_tool, dtype=float).reshape(4, 4))
        set_("bodies", tuple(self.bodies))
        dl = np.asarray(self.linear_damping, dtype=float)
        if dl.ndim == 1:
            dl = np.diag(dl)
        if dl.shape != (n, n):
            raise DimensionError(f"linear_damping must be {n}x{n}")
        if np.any(np.abs(dl - np.diag(np.diag(dl))) > 0):
            raise ValueError("linear_damping must be diagonal")
        set_("linear_damping", dl)
        set_("quadratic_damping", _vec(self.quadratic_damping, n, "quadratic_damping"))
        set_("armature", _vec(self.armature, na, "armature"))
        set_("joint_position_bounds", _vec(np.broadcast_to(self.joint_position_bounds, (na,)), na,
                                           "joint_position_bounds"))
        set_("joint_velocity_bounds", tuple(float(x) for x in self.joint_velocity_bounds))
        set_("actuation_bounds", tuple(float(x) for x in self.actuation_bounds))
        set_("posture_home", np.zeros(na) if self.posture_home is None
             else _vec(self.posture_home, na, "posture_home"))
        set_("posture_kp", np.zeros(na) if self.posture_kp is None
             else _vec(np.broadcast_to(self.posture_kp, (na,)), na, "posture_kp"))
        set_("posture_kd", np.zeros(na) if self.posture_kd is None
             else _vec(np.broadcast_to(self.posture_kd, (na,)), na, "posture_kd"))
        for b in self.bodies:
            if not 0 <= b.frame <= na:
                raise ValueError(f"body frame {b.frame} outside 0..{na}")
        if np.any(np.diag(dl) < 0) or np.any(self.quadratic_damping < 0):
            raise ValueError("damping must be positive semidefinite")
        bounds = np.concatenate([self.joint_position_bounds, self.joint_velocity_bounds,
                                 self.actuation_bounds])
        if np.any(bounds <= 0):
            raise ValueError("all bounds must be strictly positive")

    @property
    def arm_dof(self) -> int:
        return self.dh_table.shape[0]

    @property
    def n(self) -> int:
        return 6 + self.arm_dof

    def velocity_bound_vector(self):
        lin, ang, arm = self.joint_velocity_bounds
        return np.concatenate([np.full(3, lin), np.full(3, ang), np.full(self.arm_dof, arm)])

    def actuation_bound_vector(self):
        veh, arm = self.actuation_bounds
        return np.concatenate([np.full(6, veh), np.full(self.arm_dof, arm)])

    def kernel_args(self):
        return dict(
            dh=self.dh_table, base_T=self.base_to_arm, tool_T=self.arm_to_tool,
            body_frame=[b.frame for b in self.bodies],
            body_com=np.array([b.com for b in self.bodies]).reshape(-1, 3),
            body_inertia=np.array([b.inertia for b in self.bodies]).reshape(-1, 6, 6),
            body_wmb=np.array([b.weight_minus_buoyancy for b in self.bodies]),
            dlin=np.diag(self.linear_damping), dquad=self.quadratic_damping,
            armature=self.armature, home=self.posture_home, kp=self.posture_kp,
            kd=self.posture_kd, delta_j=self.jacobian_step)

    @cached_property
    def _kernel_cache(self):
        return {}

    def kernel(self, backend=None):
        """Backend-specific model handle (built once per backend)."""
        be = backend or _kernels.backend
        km = self._kernel_cache.get(be.NAME)
        if km is None:
            km = be.KernelModel(**self.kernel_args())
            self._kernel_cache[be.NAME] = km
        return km

    def with_changes(self, **kw):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return UvmsParams(**d)


def _vec(x, n, name):
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got {a.shape[0]}")
    return a.copy()


@dataclass
class JointState:
    q: np.ndarray
    qdot: np.ndarray = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1).copy()
        self.qdot = (np.zeros_like(self.q) if self.qdot is None
                     else np.asarray(self.qdot, dtype=float).reshape(-1).copy())
        if self.q.shape != self.qdot.shape:
            raise DimensionError("q and qdot must have the same length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise ValueError("joint state must be finite")

    def as_vector(self):
        return np.concatenate([self.q, self.qdot])


def _check_q(params, q, name="q"):
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (params.n,):
        raise DimensionError(f"{name} must have length {params.n}, got {q.shape[0]}")
    return q


def _state(params, state):
    return _check_q(params, state.q), _check_q(params, state.qdot, "qdot")


def _dh_transform(row, qj):
    a, alpha, d, off = row
    th = qj + off
    ct, st, ca, sa = np.cos(th), np.sin(th), np.cos(alpha), np.sin(alpha)
    return np.array([[ct, -st * ca, st * sa, a * ct],
                     [st, ct * ca, -ct * sa, a * st],
                     [0.0, sa, ca, d],
                     [0.0, 0.0, 0.0, 1.0]])


def end_effector_transform(params: UvmsParams, q) -> np.ndarray:
    """4x4 inertial end-effector transform, composed link by link."""
    from .spatial import euler_to_rotation
    q = _check_q(params, q)
    T = np.eye(4)
    T[:3, :3] = euler_to_rotation(q[3:6])
    T[:3, 3] = q[:3]
    T = T @ params.base_to_arm
    for j in range(params.arm_dof):
        T = T @ _dh_transform(params.dh_table[j], q[6 + j])
    return T @ params.arm_to_tool


def forward_kinematics(params: UvmsParams, q) -> Pose6:
    """End-effector pose in the inertial frame."""
    T = end_effector_transform(params, q)
    return Pose6(T[:3, 3], rotation_to_euler(T[:3, :3]))


def geometric_jacobian(params: UvmsParams, q, backend=None) -> np.ndarray:
    """6 x n map from generalized rates to the inertial end-effector twist."""
    q = _check_q(params, q)
    be = backend or _kernels.backend
    return be.ee_kinematics(params.kernel(be), q)[2]


def jacobian_time_derivative(params: UvmsParams, q, qdot, step=None) -> np.ndarray:
    """Directional central difference of the Jacobian along ``qdot``."""
    q = _check_q(params, q)
    qdot = _check_q(params, qdot, "qdot")
    d = params.jacobian_step if step is None else step
    return (geometric_jacobian(params, q + d * qdot)
            - geometric_jacobian(params, q - d * qdot)) / (2.0 * d)


def singularity_measure(params: UvmsParams, q, arm_only=False) -> float:
    """det(J J^T), or for the arm sub-chain alone the product of squared singular values.

    The arm block is 6 x arm_dof, so its measure is det(J_a^T J_a) when the arm
    has fewer joints than task directions.
    """
    J = geometric_jacobian(params, q)
    if arm_only:
        J = J[:, 6:]
        if J.shape[1] < 6:
            return float(max(np.linalg.det(J.T @ J), 0.0))
    return float(max(np.linalg.det(J @ J.T), 0.0))


def joint_space_terms(params: UvmsParams, state: JointState, backend=None):
    """(M_q, C_q qdot, D_q qdot, g_q) of the free-floating joint-space dynamics."""
    q, qd = _state(params, state)
    be = backend or _kernels.backend
    M, Cqd, Dqd, g, *_ = be.joint_terms(params.kernel(be), q, qd)
    return M, Cqd, Dqd, g


def baseline_torque(params: UvmsParams, state: JointState, backend=None) -> np.ndarray:
    """Torque offset added to J^T u: restoring compensation plus a null-space posture term.

    The posture term is projected through the dynamically consistent null space
    of J, so it produces no end-effector acceleration.
    """
    q, qd = _state(params, state)
    be = backend or _kernels.backend
    return be.joint_terms(params.kernel(be), q, qd)[8]


def task_space_terms(params: UvmsParams, state: JointState, eps_sing=EPS_SING, backend=None):
    """(M_i, C_i v, D_i v, g_i): end-effector dynamics through the dynamically consistent inverse."""
    q, qd = _state(params, state)
    be = backend or _kernels.backend
    M, Cqd, Dqd, g, J, Jdot, *_ = be.joint_terms(params.kernel(be), q, qd)
    det = float(np.linalg.det(J @ J.T))
    if not det > eps_sing:
        raise NearSingular(f"det(J J^T) = {det:.3e} <= {eps_sing:.1e}")
    Y = np.linalg.solve(M, J.T)
    Lam = np.linalg.inv(J @ Y)
    Lam = 0.5 * (Lam + Lam.T)
    Ci_v = Lam @ (Y.T @ Cqd - Jdot @ qd)
    Di_v = Lam @ (Y.T @ Dqd)
    gi = Lam @ (Y.T @ g)
    return Lam, Ci_v, Di_v, gi


def forward_dynamics(params: UvmsParams, state: JointState, tau, backend=None) -> np.ndarray:
    """Free (unconstrained) joint accelerations under generalized force ``tau``."""
    M, Cqd, Dqd, g = joint_space_terms(params, state, backend)
    return np.linalg.solve(M, np.asarray(tau, dtype=float) - Cqd - Dqd - g)


def kinetic_energy(params: UvmsParams, state: JointState) -> float:
    M = joint_space_terms(params, state)[0]
    return 0.5 * float(state.qdot @ M @ state.qdot)


def default_uvms_params(**overrides) -> UvmsParams:
    """Placeholder 6-DOF vehicle with a 4-DOF bow-mounted arm.

    Arm at zero joint angles points straight ahead, 0.4 m from its base, with the
    end-effector frame aligned to the vehicle frame. Joint 1 yaws, joints 2 and 3
    pitch and joint 4 rolls about the forearm.
    """
    dh = np.array([
        [0.00, np.pi / 2, 0.00, 0.0],
        [0.15, 0.0, 0.00, 0.0],
        [0.00, np.pi / 2, 0.00, np.pi / 2],
        [0.00, 0.0, 0.15, 0.0],
    ])
    base = np.eye(4)
    base[:3, 3] = [0.6, 0.0, -0.1]
    tool = np.eye(4)
    # last link frame axes at home are (z, -y, x) of the vehicle
    tool[:3, :3] = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]]).T
    tool[:3, 3] = [0.0, 0.0, 0.1]
    vehicle = RigidBody(0, np.zeros(3),
                        spatial_inertia(20.0, (0.6, 1.0, 1.0), (8.0, 14.0, 16.0), (0.3, 0.6, 0.6)),
                        weight_minus_buoyancy=200.0)
    buoyancy = RigidBody(0, (0.0, 0.0, 0.04), np.zeros((6, 6)), weight_minus_buoyancy=-198.0)
    links = (
        RigidBody(2, (-0.075, 0.0, 0.0),
                  spatial_inertia(0.3, (1e-4, 8e-4, 8e-4), (0.2, 0.3, 0.3), (1e-4, 5e-4, 5e-4)), 0.3),
        RigidBody(4, (0.0, 0.0, -0.05),
                  spatial_inertia(0.4, (1e-3, 1e-3, 2e-4), (0.3, 0.3, 0.2), (5e-4, 5e-4, 1e-4)), 0.4),
    )
    kw = dict(
        dh_table=dh, base_to_arm=base, arm_to_tool=tool,
        bodies=(vehicle, buoyancy) + links,
        linear_damping=np.diag([8.0, 10.0, 10.0, 3.0, 3.0, 3.0, 0.3, 0.3, 0.3, 0.2]),
        quadratic_damping=np.array([8.0, 12.0, 12.0, 2.0, 2.0, 2.0, 0.2, 0.2, 0.2, 0.1]),
        armature=np.array([0.02, 0.02, 0.02, 0.01]),
        joint_position_bounds=np.full(4, 2.0),
        joint_velocity_bounds=(0.5, 0.1, 0.1),
        actuation_bounds=(10.0, 2.0),
        posture_home=np.zeros(4),
        posture_kp=np.array([6.0, 6.0, 6.0, 2.0]),
        posture_kd=np.array([3.0, 3.0, 3.0, 1.0]),
    )
    kw.update(overrides)
    return UvmsParams(**kw)
