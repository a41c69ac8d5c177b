"""Ground-truth plant: agents and payload coupled by rigid grasps through multipliers.

Each agent obeys its joint-space dynamics with the contact wrench entering as
``-J^T lambda``; the payload receives ``sum J_Oi^T lambda_i``. Grasp
constraints are enforced at acceleration level with Baumgarte feedback on
the pose and twist residuals, and the system is stepped with RK4.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import IsolationViolation, SingularKKT, UvmsError
from .grasp import GraspGeometry
from .object_model import ObjectParams
from .spatial import (euler_rate_jacobian_inv, euler_to_rotation, rotation_error,
                      rotation_to_euler, skew, wrap_angle)
from .uvms_model import JointState, UvmsParams, end_effector_transform
from .world import clearance

log = logging.getLogger(__name__)


@dataclass
class PlantModel:
    agents: list
    obj: ObjectParams
    geom: GraspGeometry
    zeta: float = 1.0
    omega: float = 20.0
    cond_max: float = 1e12
    backend: object = None

    def __post_init__(self):
        self.be = self.backend or _kernels.backend
        self._km = [p.kernel(self.be) for p in self.agents]
        self._ko = self.obj.kernel(self.be)
        self.sizes = [p.n for p in self.agents]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.n_total = int(self.offsets[-1]) + 6
        # rotation offset of each grasp, composed with the object attitude
        self.R_alpha = [euler_to_rotation(a) for a in self.geom.alphas]

    @property
    def n_agents(self):
        return len(self.agents)


@dataclass
class PlantState:
    q: list
    qdot: list
    x_obj: np.ndarray
    v_obj: np.ndarray

    def copy(self):
        return PlantState([a.copy() for a in self.q], [a.copy() for a in self.qdot],
                          self.x_obj.copy(), self.v_obj.copy())

    def joint_state(self, i):
        return JointState(self.q[i], self.qdot[i])


@dataclass
class Resolution:
    qdd: list
    vdot_obj: np.ndarray
    lam: list
    tau: list
    det: list
    kkt_residual: float
    third_law_residual: float
    condition: float


def _agent_terms(model, state, i):
    return model.be.joint_terms(model._km[i], state.q[i], state.qdot[i])


def grasp_residuals(model: PlantModel, state: PlantState, terms=None):
    """Per agent (pose residual, twist residual), both 6-vectors in the inertial frame."""
    RO = euler_to_rotation(state.x_obj[3:])
    w = state.v_obj[3:]
    ep, ev = [], []
    for i in range(model.n_agents):
        t = terms[i] if terms is not None else _agent_terms(model, state, i)
        J, p, R = t[4], t[6], t[7]
        r = RO @ model.geom.offsets[i]
        ep.append(np.concatenate([p - state.x_obj[:3] - r,
                                  rotation_error(R, RO @ model.R_alpha[i])]))
        vi = J @ state.qdot[i]
        vt = state.v_obj.copy()
        vt[:3] += np.cross(w, r)
        ev.append(vi - vt)
    return ep, ev


def resolve_constrained_accelerations(model: PlantModel, state: PlantState, inputs,
                                      baumgarte=True, tau_override=None) -> Resolution:
    """Accelerations and grasp wrenches under end-effector inputs ``inputs``.

    The applied generalized force is ``J^T u + tau0`` unless ``tau_override``
    supplies it directly.
    """
    N = model.n_agents
    terms = [_agent_terms(model, state, i) for i in range(N)]
    MO, COv, DOv, gO = model.be.object_terms(model._ko, state.x_obj, state.v_obj)
    nt = model.n_total
    Mb = np.zeros((nt, nt))
    f = np.zeros(nt)
    A = np.zeros((6 * N, nt))
    b = np.zeros(6 * N)
    RO = euler_to_rotation(state.x_obj[3:])
    w = state.v_obj[3:]
    ep, ev = grasp_residuals(model, state, terms) if baumgarte else (None, None)
    taus, dets = [], []
    for i in range(N):
        M, Cqd, Dqd, g, J, Jdot, p, R, tau0 = terms[i]
        a, z = model.offsets[i], model.offsets[i + 1]
        tau = (J.T @ np.asarray(inputs[i], dtype=float) + tau0 if tau_override is None
               else np.asarray(tau_override[i], dtype=float))
        taus.append(tau)
        dets.append(float(np.linalg.det(J @ J.T)))
        Mb[a:z, a:z] = M
        f[a:z] = tau - Cqd - Dqd - g
        r = RO @ model.geom.offsets[i]
        rows = slice(6 * i, 6 * i + 6)
        A[rows, a:z] = J
        # -J_Oi in the object columns
        A[rows.start:rows.start + 3, nt - 6:nt - 3] = -np.eye(3)
        A[rows.start:rows.start + 3, nt - 3:] = skew(r)
        A[rows.start + 3:rows.stop, nt - 3:] = -np.eye(3)
        JOd_v = np.concatenate([np.cross(w, np.cross(w, r)), np.zeros(3)])
        b[rows] = -Jdot @ state.qdot[i] + JOd_v
        if baumgarte:
            b[rows] -= 2.0 * model.zeta * model.omega * ev[i] + model.omega ** 2 * ep[i]
    Mb[nt - 6:, nt - 6:] = MO
    f[nt - 6:] = -COv - DOv - gO
    # Schur complement on the multipliers
    Lm = np.linalg.cholesky(Mb)
    Y = np.linalg.solve(Lm.T, np.linalg.solve(Lm, np.column_stack([A.T, f])))
    S = A @ Y[:, :-1]
    S = 0.5 * (S + S.T)
    ev_S = np.linalg.eigvalsh(S)
    cond = float(ev_S[-1] / ev_S[0]) if ev_S[0] > 0 else np.inf
    if not cond <= model.cond_max:
        raise SingularKKT(f"grasp constraint system is rank deficient (condition {cond:.3e})",
                          condition=cond)
    lam = np.linalg.solve(S, A @ Y[:, -1] - b)
    zacc = Y[:, -1] - Y[:, :-1] @ lam
    r1 = Mb @ zacc + A.T @ lam - f
    r2 = A @ zacc - b
    scale = 1.0 + np.abs(f).max() + np.abs(b).max()
    kkt = float(max(np.abs(r1).max(), np.abs(r2).max()) / scale)
    lam_list = [lam[6 * i:6 * i + 6] for i in range(N)]
    vdot = zacc[nt - 6:]
    G = A[:, nt - 6:]
    obj_wrench = MO @ vdot + COv + DOv + gO
    third = float(np.abs(obj_wrench - (-G.T @ lam)).max() / (1.0 + np.abs(obj_wrench).max()))
    qdd = [zacc[model.offsets[i]:model.offsets[i + 1]] for i in range(N)]
    return Resolution(qdd, vdot, lam_list, taus, dets, kkt, third, cond)


def _derivative(model, state, inputs, tau_override=None):
    res = resolve_constrained_accelerations(model, state, inputs, tau_override=tau_override)
    xdot = euler_rate_jacobian_inv(state.x_obj[3:], 0.0) @ state.v_obj
    return res, (state.qdot, res.qdd, xdot, res.vdot_obj)


def _advance(state, d, dt):
    return PlantState([q + dt * a for q, a in zip(state.q, d[0])],
                      [v + dt * a for v, a in zip(state.qdot, d[1])],
                      state.x_obj + dt * d[2], state.v_obj + dt * d[3])


def step(model: PlantModel, state: PlantState, inputs, dt, tau_override=None):
    """One RK4 step; returns (new state, resolution at the step start)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    r1, k1 = _derivative(model, state, inputs, tau_override)
    _, k2 = _derivative(model, _advance(state, k1, 0.5 * dt), inputs, tau_override)
    _, k3 = _derivative(model, _advance(state, k2, 0.5 * dt), inputs, tau_override)
    _, k4 = _derivative(model, _advance(state, k3, dt), inputs, tau_override)
    comb = [[a + 2 * b + 2 * c + d for a, b, c, d in zip(*parts)] if isinstance(parts[0], list)
            else parts[0] + 2 * parts[1] + 2 * parts[2] + parts[3]
            for parts in zip(k1, k2, k3, k4)]
    new = _advance(state, comb, dt / 6.0)
    for q in new.q:
        q[3:6] = wrap_angle(q[3:6])
    new.x_obj[3:] = wrap_angle(new.x_obj[3:])
    return new, r1


def _vehicle_pose_for(params: UvmsParams, T_ee, q_arm):
    q = np.concatenate([np.zeros(6), q_arm])
    T_rel = end_effector_transform(params, q)
    TB = T_ee @ np.linalg.inv(T_rel)
    return np.concatenate([TB[:3, 3], rotation_to_euler(TB[:3, :3]), q_arm])


def initial_state(model: PlantModel, object_pose, tol=1e-13, max_iter=50) -> PlantState:
    """Agents at rest holding the object at ``object_pose`` with arms at their posture home.

    The vehicle pose is solved in closed form, then polished by damped least squares.
    """
    x = np.asarray(object_pose, dtype=float).reshape(6)
    RO = euler_to_rotation(x[3:])
    qs = []
    for i, prm in enumerate(model.agents):
        T = np.eye(4)
        T[:3, :3] = RO @ model.R_alpha[i]
        T[:3, 3] = x[:3] + RO @ model.geom.offsets[i]
        q = _vehicle_pose_for(prm, T, prm.posture_home)
        for _ in range(max_iter):
            Te = end_effector_transform(prm, q)
            e = np.concatenate([T[:3, 3] - Te[:3, 3], rotation_error(T[:3, :3], Te[:3, :3])])
            if np.abs(e).max() < tol:
                break
            J = model.be.ee_kinematics(model._km[i], q)[2]
            q = q + J.T @ np.linalg.solve(J @ J.T + 1e-12 * np.eye(6), e)
        qs.append(q)
    return PlantState(qs, [np.zeros(p.n) for p in model.agents], x.copy(), np.zeros(6))


# ---------------------------------------------------------------- isolation


class SensorChannel:
    """Per-agent measurement port; only its owner may read it."""

    def __init__(self, audit, agent_id, owner):
        self._audit = audit
        self.agent_id = agent_id
        self._owner = owner

    def read(self, caller) -> JointState:
        if caller is not self._owner:
            self._audit.record_violation(
                f"controller {getattr(caller, 'agent_id', '?')} read agent {self.agent_id}'s sensor")
        self._audit.reads[self.agent_id] += 1
        st = self._audit.current_state
        return JointState(st.q[self.agent_id].copy(), st.qdot[self.agent_id].copy())


class IsolationAudit:
    """Hands out sensor channels and checks that controllers share no mutable data."""

    def __init__(self, n_agents, strict=True):
        self.reads = [0] * n_agents
        self.violations = []
        self.strict = strict
        self.current_state = None
        self.checks = 0

    def channel(self, agent_id, owner):
        return SensorChannel(self, agent_id, owner)

    def record_violation(self, msg):
        self.violations.append(msg)
        if self.strict:
            raise IsolationViolation(msg)

    @staticmethod
    def _mutable_ids(obj, seen=None, depth=0):
        """ids of mutable containers and arrays reachable from ``obj``.

        Frozen dataclasses (scenario parameters) are immutable and skipped.
        """
        out = set()
        seen = set() if seen is None else seen
        if id(obj) in seen or depth > 6:
            return out
        seen.add(id(obj))
        params = getattr(obj, "__dataclass_params__", None)
        if params is not None and params.frozen:
            return out
        if isinstance(obj, np.ndarray):
            base = obj if obj.base is None else obj.base
            out.add(id(base))
            return out
        if isinstance(obj, (list, dict, set)):
            out.add(id(obj))
            items = obj.values() if isinstance(obj, dict) else obj
            for v in items:
                out |= IsolationAudit._mutable_ids(v, seen, depth + 1)
            return out
        d = getattr(obj, "__dict__", None)
        if d is not None and not isinstance(obj, type):
            out.add(id(d))
            for k, v in d.items():
                if k.startswith("_kernel") or k in ("be", "km", "ko", "kg", "world", "nav"):
                    continue
                out |= IsolationAudit._mutable_ids(v, seen, depth + 1)
        return out

    def check_controllers(self, controllers):
        self.checks += 1
        ids = [self._mutable_ids(c) for c in controllers]
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                shared = ids[i] & ids[j]
                if shared:
                    self.record_violation(f"controllers {i} and {j} share {len(shared)} "
                                          "mutable objects")

    @property
    def passed(self):
        # every controller read its own sensor once per sample and nothing else
        return not self.violations and len(set(self.reads)) <= 1


# ---------------------------------------------------------------- closed loop


@dataclass
class RunLog:
    """Plant-substep time series plus per-sample controller records."""
    t: list = field(default_factory=list)
    q: list = field(default_factory=list)
    qdot: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    u: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    det: list = field(default_factory=list)
    x_obj: list = field(default_factory=list)
    v_obj: list = field(default_factory=list)
    clearance: list = field(default_factory=list)
    grasp_residual: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    kkt_residual: list = field(default_factory=list)
    third_law_residual: list = field(default_factory=list)
    # per controller sample
    sample_t: list = field(default_factory=list)
    solve_cost: list = field(default_factory=list)
    solve_iterations: list = field(default_factory=list)
    solve_status: list = field(default_factory=list)
    solve_time: list = field(default_factory=list)
    active_waypoint: list = field(default_factory=list)
    reference_twist: list = field(default_factory=list)
    reconstruction_spread: list = field(default_factory=list)
    fallbacks: int = 0
    isolation: dict = field(default_factory=dict)
    terminated: str = ""

    def finalize(self):
        for k, v in list(vars(self).items()):
            if isinstance(v, list):
                setattr(self, k, np.asarray(v))
        return self


def _true_margins(prm, st, tau):
    jp = prm.joint_position_bounds - np.abs(st.q[6:])
    vel = prm.velocity_bound_vector() - np.abs(st.qdot)
    tq = prm.actuation_bound_vector() - np.abs(tau)
    return np.concatenate([jp, vel, tq])


def run_closed_loop(scenario, jobs=1, audit_strict=True, progress=None) -> RunLog:
    """Alternate controller sampling with plant substeps until the last waypoint is captured."""
    from .grasp import agent_object_state
    from .nmpc import AgentController

    sc = scenario
    model = PlantModel(list(sc.agents), sc.obj, sc.geom, sc.baumgarte_zeta, sc.baumgarte_omega)
    N = model.n_agents
    state = initial_state(model, sc.initial_object_pose)
    controllers = [AgentController(i, sc.agents[i], sc.obj, sc.geom, float(sc.load_sharing.c[i]),
                                   sc.world, sc.nav, sc.waypoints, sc.nmpc)
                   for i in range(N)]
    audit = IsolationAudit(N, strict=audit_strict)
    channels = [audit.channel(i, controllers[i]) for i in range(N)]
    h = sc.nmpc.h
    dt = h / sc.plant_substeps
    logd = RunLog()
    inputs = [np.zeros(6) for _ in range(N)]
    costs = [np.nan] * N
    wp = np.asarray(sc.waypoints, dtype=float)
    captured = 0
    t = 0.0
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None

    def solve_one(i, meas, tt):
        t0 = time.perf_counter()
        try:
            u, sol = controllers[i].step(meas, tt)
            return u, sol, time.perf_counter() - t0, None
        except UvmsError as exc:
            return None, None, time.perf_counter() - t0, exc

    if np.linalg.norm(state.x_obj[:3] - wp[-1]) <= sc.nav.capture_radius and len(wp) == 1:
        captured = len(wp)
    try:
        n_samples = int(np.floor(sc.time_budget / h + 1e-9))
        for j in range(n_samples):
            if captured >= len(wp):
                logd.terminated = "captured"
                break
            audit.current_state = state
            meas = [channels[i].read(controllers[i]) for i in range(N)]
            if pool is not None:
                results = list(pool.map(lambda i: solve_one(i, meas[i], t), range(N)))
            else:
                results = [solve_one(i, meas[i], t) for i in range(N)]
            audit.current_state = None
            recon = []
            for i, (u, sol, el, exc) in enumerate(results):
                if exc is not None:
                    log.warning("agent %d solve failed at t=%.2f: %s; holding input", i, t, exc)
                    logd.fallbacks += 1
                else:
                    inputs[i] = u
                    costs[i] = sol.cost
                recon.append(agent_object_state(sc.agents[i], meas[i], sc.geom, i).pose.as_vector())
            logd.sample_t.append(t)
            logd.solve_cost.append([r[1].cost if r[1] is not None else np.nan for r in results])
            logd.solve_iterations.append([r[1].iterations if r[1] is not None else -1
                                          for r in results])
            logd.solve_status.append([r[1].status if r[1] is not None else "error"
                                      for r in results])
            logd.solve_time.append([r[2] for r in results])
            logd.active_waypoint.append([c.sequencer.index for c in controllers])
            logd.reference_twist.append([c.last_reference.twists[0] if c.last_reference is not None
                                         else np.zeros(6) for c in controllers])
            d = np.array(recon)
            logd.reconstruction_spread.append(float(np.abs(d - d[0]).max()))
            if j % 25 == 0:
                audit.check_controllers(controllers)
            for s in range(sc.plant_substeps):
                new, res = step(model, state, inputs, dt)
                _log_row(logd, sc, model, t, state, inputs, res, costs)
                state = new
                t += dt
            while captured < len(wp) and np.linalg.norm(state.x_obj[:3] - wp[captured]) \
                    <= sc.nav.capture_radius:
                captured += 1
            if progress is not None:
                progress(t, state, captured)
        else:
            logd.terminated = "captured" if captured >= len(wp) else "time_budget"
        if captured >= len(wp) and not logd.terminated:
            logd.terminated = "captured"
    finally:
        if pool is not None:
            pool.shutdown()
    # final row
    res = resolve_constrained_accelerations(model, state, inputs)
    _log_row(logd, sc, model, t, state, inputs, res, costs)
    logd.isolation = {"passed": audit.passed, "violations": list(audit.violations),
                      "reads": list(audit.reads), "checks": audit.checks}
    return logd.finalize()


def _log_row(logd, sc, model, t, state, inputs, res, costs):
    ep, ev = grasp_residuals(model, state)
    logd.t.append(t)
    logd.q.append(np.array(state.q))
    logd.qdot.append(np.array(state.qdot))
    logd.tau.append(np.array(res.tau))
    logd.u.append(np.array(inputs))
    logd.lam.append(np.array(res.lam))
    logd.det.append(np.array(res.det))
    logd.x_obj.append(state.x_obj.copy())
    logd.v_obj.append(state.v_obj.copy())
    logd.clearance.append(clearance(state.x_obj[:3], sc.world))
    logd.grasp_residual.append([max(np.abs(a).max(), 0.0) for a in ep])
    logd.margins.append(np.array([_true_margins(p, state.joint_state(i), res.tau[i])
                                  for i, p in enumerate(model.agents)]))
    logd.cost.append(list(costs))
    logd.kkt_residual.append(res.kkt_residual)
    logd.third_law_residual.append(res.third_law_residual)
