"""Property suites shared by the ``check`` command and the acceptance tests.

Each suite returns a :class:`CheckResult` holding the measured worst-case
error next to the tolerance it is judged against.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grasp import (GraspGeometry, agent_object_state, coupled_terms, coupling_jacobian_rate_times,
                    distributed_terms, end_effector_target, lever_arm, object_coupling_jacobian)
from .navfun import NavFunConfig, Reference, descend, nf_gradient, nf_value
from .nmpc import DoubleIntegratorPrediction, NmpcConfig, solve_fhocp
from .object_model import ObjectState, default_object_params
from .spatial import rotation_to_euler
from .uvms_model import (JointState, RigidBody, UvmsParams, default_uvms_params,
                         end_effector_transform, geometric_jacobian, kinetic_energy)
from .world import clearance, default_world


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seconds: float
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<10} measured {self.measured:.3e}  tolerance {self.tolerance:.1e}"
                f"  ({self.seconds:.1f} s) {self.detail}")


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def vehicle_pose_for(params: UvmsParams, ee_transform, q_arm):
    """Generalized coordinates placing the end effector at ``ee_transform`` for the given arm angles."""
    q = np.concatenate([np.zeros(6), q_arm])
    TB = ee_transform @ np.linalg.inv(end_effector_transform(params, q))
    return np.concatenate([TB[:3, 3], rotation_to_euler(TB[:3, :3]), q_arm])


def random_team_state(rng, params, obj_params, n_agents=2, arm_spread=0.3):
    """A kinematically consistent team: grasps, load split, object state and agent states."""
    offsets = rng.uniform(-0.8, 0.8, size=(n_agents, 3))
    alphas = rng.uniform(-0.4, 0.4, size=(n_agents, 3))
    geom = GraspGeometry(offsets, alphas)
    c = rng.dirichlet(np.ones(n_agents))
    xO = np.concatenate([rng.normal(size=3), rng.uniform(-0.5, 0.5, size=3)])
    vO = 0.3 * rng.normal(size=6)
    obj = ObjectState.from_vectors(xO, vO)
    be = _kernels.backend
    states = []
    for i in range(n_agents):
        ee = end_effector_target(xO, geom, i)
        T = np.eye(4)
        T[:3, :3] = ee.rotation
        T[:3, 3] = ee.position
        q = vehicle_pose_for(params, T, params.posture_home + arm_spread * rng.normal(size=params.arm_dof))
        _, JOi = object_coupling_jacobian(geom, i, xO[3:])
        J = be.ee_kinematics(params.kernel(be), q)[2]
        Jp = np.linalg.pinv(J)
        qd = Jp @ (JOi @ vO) + (np.eye(params.n) - Jp @ J) @ rng.normal(size=params.n)
        states.append(JointState(q, qd))
    return geom, c, obj, states


@_timed
def identity_suite(n_states=1000, seed=0, tol=1e-9) -> CheckResult:
    """Per-agent distributed terms summed over the team equal the coupled object-space terms."""
    rng = np.random.default_rng(seed)
    P = default_uvms_params()
    O = default_object_params()
    be = _kernels.backend
    worst = 0.0
    for _ in range(n_states):
        geom, c, obj, states = random_team_state(rng, P, O)
        xO, vO = obj.pose.as_vector(), obj.twist.as_vector()
        aO = rng.normal(size=6)
        total = np.zeros(6)
        for i, st in enumerate(states):
            _, JOi = object_coupling_jacobian(geom, i, xO[3:])
            _, JOid_v = coupling_jacobian_rate_times(lever_arm(geom, i, xO[3:]), vO[3:])
            _, _, _, _, J, Jdot, *_ = be.joint_terms(P.kernel(be), st.q, st.qdot)
            Jp = np.linalg.pinv(J)
            qdd = (Jp @ (JOi @ aO + JOid_v - Jdot @ st.qdot)
                   + (np.eye(P.n) - Jp @ J) @ rng.normal(size=P.n))
            Mt, Ct, Dt, gt = distributed_terms(P, st, O, geom, i, c[i], obj_state=obj)
            total += Mt @ qdd + Ct + Dt + gt
        M, Cv, Dv, g = coupled_terms([P] * len(states), states, O, obj, geom)
        ref = M @ aO + Cv + Dv + g
        worst = max(worst, float(np.linalg.norm(total - ref) / np.linalg.norm(ref)))
    return CheckResult("identity", worst <= tol, worst, tol, 0.0, f"{n_states} states")


def fd_jacobian(params, q, step=1e-7):
    """Central differences of end-effector position and orientation (body rotation vector)."""
    T0 = end_effector_transform(params, q)
    J = np.zeros((6, params.n))
    for j in range(params.n):
        dq = np.zeros(params.n)
        dq[j] = step
        Tp = end_effector_transform(params, q + dq)
        Tm = end_effector_transform(params, q - dq)
        J[:3, j] = (Tp[:3, 3] - Tm[:3, 3]) / (2 * step)
        dR = (Tp[:3, :3] - Tm[:3, :3]) / (2 * step) @ T0[:3, :3].T
        J[3:, j] = [dR[2, 1], dR[0, 2], dR[1, 0]]
    return J


@_timed
def fd_suite(n_states=100, seed=1, tol=1e-5, coupling_tol=1e-12) -> CheckResult:
    """Analytic Jacobian against kinematic finite differences, plus J_iO J_Oi = I."""
    rng = np.random.default_rng(seed)
    P = default_uvms_params()
    worst = 0.0
    for _ in range(n_states):
        q = np.concatenate([rng.normal(size=3), rng.uniform(-1.2, 1.2, size=3),
                            rng.uniform(-1.5, 1.5, size=P.arm_dof)])
        Ja = geometric_jacobian(P, q)
        Jf = fd_jacobian(P, q)
        worst = max(worst, float(np.linalg.norm(Ja - Jf) / np.linalg.norm(Jf)))
    wc = 0.0
    for _ in range(n_states):
        geom = GraspGeometry(rng.uniform(-2, 2, size=(1, 3)), np.zeros((1, 3)))
        JiO, JOi = object_coupling_jacobian(geom, 0, rng.uniform(-1.2, 1.2, size=3))
        wc = max(wc, float(np.abs(JiO @ JOi - np.eye(6)).max()))
    ok = worst <= tol and wc <= coupling_tol
    return CheckResult("fd", ok, worst, tol, 0.0, f"coupling inverse error {wc:.1e}")


def neutral_undamped(params: UvmsParams = None) -> UvmsParams:
    """Copy of the model with damping, restoring forces and the posture term removed."""
    P = params or default_uvms_params()
    bodies = tuple(RigidBody(b.frame, b.com, b.inertia, 0.0) for b in P.bodies)
    return P.with_changes(bodies=bodies, linear_damping=np.zeros((P.n, P.n)),
                          quadratic_damping=np.zeros(P.n), posture_kp=np.zeros(P.arm_dof),
                          posture_kd=np.zeros(P.arm_dof))


def free_rk4(params, q, qd, dt, steps, backend=None):
    """Unforced joint-space motion by RK4; returns the kinetic-energy history."""
    be = backend or _kernels.backend
    km = params.kernel(be)

    def acc(q, qd):
        M, Cqd, Dqd, g, *_ = be.joint_terms(km, q, qd)
        return np.linalg.solve(M, -Cqd - Dqd - g)

    E = np.empty(steps + 1)
    E[0] = kinetic_energy(params, JointState(q, qd))
    for k in range(steps):
        a1 = acc(q, qd)
        a2 = acc(q + 0.5 * dt * qd, qd + 0.5 * dt * a1)
        a3 = acc(q + 0.5 * dt * (qd + 0.5 * dt * a1), qd + 0.5 * dt * a2)
        a4 = acc(q + dt * (qd + 0.5 * dt * a2), qd + dt * a3)
        q = q + dt * qd + dt * dt / 6.0 * (a1 + a2 + a3)
        qd = qd + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        E[k + 1] = kinetic_energy(params, JointState(q, qd))
    return q, qd, E


@_timed
def energy_suite(duration=10.0, dt=1e-3, seed=2, tol=1e-6) -> CheckResult:
    """Kinetic energy of a free, undamped, neutrally buoyant system is conserved."""
    rng = np.random.default_rng(seed)
    P = neutral_undamped()
    q = np.concatenate([np.zeros(3), 0.2 * rng.normal(size=3), P.posture_home + 0.3 * rng.normal(size=4)])
    qd = np.concatenate([0.2 * rng.normal(size=3), 0.1 * rng.normal(size=3), 0.3 * rng.normal(size=4)])
    _, _, E = free_rk4(P, q, qd, dt, int(round(duration / dt)))
    drift = float(np.abs(E - E[0]).max() / E[0])
    return CheckResult("energy", drift <= tol, drift, tol, 0.0, f"{duration:g} s at dt={dt:g}")


@_timed
def nf_suite(n_grad=200, n_starts=100, seed=3, grad_tol=1e-6, exponents=(3, 4, 6, 8),
             goals=None) -> CheckResult:
    """Range and goal value of the potential, gradient against FD, and safe descent."""
    rng = np.random.default_rng(seed)
    world = default_world()
    goals = np.array([[6.0, -6.0, 0.85], [7.5, 1.5, 0.78], [12.0, 6.5, 0.65]]) if goals is None else goals
    cfg = NavFunConfig(k=4.0)

    def free_point():
        while True:
            x = world.boundary_center + rng.uniform(-1, 1, size=3) * (world.boundary_radius - world.team_radius)
            if clearance(x, world) > 0.05:
                return x

    range_ok = all(nf_value(g, g, world, cfg) == 0.0 for g in goals)
    worst_grad = 0.0
    for _ in range(n_grad):
        x, g = free_point(), goals[rng.integers(len(goals))]
        v = nf_value(x, g, world, cfg)
        range_ok &= 0.0 <= v < 1.0
        a = nf_gradient(x, g, world, cfg)
        fd = np.zeros(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-6
            fd[j] = (nf_value(x + e, g, world, cfg) - nf_value(x - e, g, world, cfg)) / 2e-6
        worst_grad = max(worst_grad, float(np.linalg.norm(a - fd) / max(np.linalg.norm(fd), 1e-12)))
    starts = [free_point() for _ in range(n_starts)]
    good_k = []
    for g in goals:
        ks = []
        for k in exponents:
            c = NavFunConfig(k=float(k))
            runs = (descend(x0, g, world, c) for x0 in starts)
            if all(reached and cmin > 0 for reached, _, cmin in runs):
                ks.append(k)
                break
        good_k.append(ks[0] if ks else None)
    ok = range_ok and worst_grad <= grad_tol and all(k is not None for k in good_k)
    return CheckResult("nf", ok, worst_grad, grad_tol, 0.0,
                       f"range ok={range_ok}, descent exponents per goal {good_k}")


def lqr_first_input(cfg: NmpcConfig, x0):
    """Finite-horizon discrete LQR first input for the scaled double-integrator cost."""
    m = DoubleIntegratorPrediction(cfg)
    A, B, h = m.A, m.B, cfg.h
    Q = h * np.block([[cfg.state_weight, np.zeros((6, 6))], [np.zeros((6, 6)), cfg.velocity_weight]])
    R = h * cfg.input_weight / cfg.input_scale ** 2
    P = np.block([[cfg.terminal_weight, np.zeros((6, 6))], [np.zeros((6, 12))]])
    K = None
    for _ in range(cfg.horizon_steps):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
    return -K @ x0


@_timed
def lqr_suite(n_states=50, seed=4, tol=0.02) -> CheckResult:
    """First NMPC input on the double-integrator surrogate against the Riccati oracle."""
    rng = np.random.default_rng(seed)
    cfg = NmpcConfig()
    model = DoubleIntegratorPrediction(cfg)
    N = cfg.horizon_steps
    ref = Reference(cfg.h * np.arange(N + 1), np.zeros((N + 1, 6)), np.zeros((N + 1, 6)))
    worst = 0.0
    for _ in range(n_states):
        x0 = np.concatenate([rng.uniform(-1, 1, size=6), rng.uniform(-0.5, 0.5, size=6)])
        sol = solve_fhocp(model, x0, ref, np.zeros((N, 6)), cfg)
        u_star = lqr_first_input(cfg, x0)
        worst = max(worst, float(np.linalg.norm(sol.inputs[0] - u_star) / np.linalg.norm(u_star)))
    return CheckResult("lqr", worst <= tol, worst, tol, 0.0, f"{n_states} initial states")


SUITES = {
    "identity": identity_suite,
    "fd": fd_suite,
    "energy": energy_suite,
    "nf": nf_suite,
    "lqr": lqr_suite,
}


def run_suites(names=None):
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    return [SUITES[n]() for n in names]
