"""Per-agent sampled-data NMPC by direct single shooting.

Decision variables are N piecewise-constant end-effector wrenches, scaled by
``input_scale``. The penalized cost is written as a sum of squared residuals
and minimized with Levenberg-Marquardt on a forward-difference Jacobian; when
block ``k`` is perturbed only blocks ``k..N-1`` are re-simulated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .constraints import (InputConstraintSet, StateConstraintSet, state_margins_from)
from .errors import InfeasibleStart
from .grasp import GraspGeometry, agent_object_state, object_coupling_jacobian
from .navfun import NavFunConfig, Reference, WaypointSequencer, propagate_reference
from .object_model import ObjectParams, ObjectState, object_terms
from .spatial import PITCH_EPS, wrap_angle
from .uvms_model import EPS_SING, JointState, UvmsParams
from .world import SphereWorld

log = logging.getLogger(__name__)


def _spd_factor(name, W):
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = np.diag(W)
    if W.shape != (6, 6) or not np.allclose(W, W.T):
        raise ValueError(f"{name} must be a symmetric 6x6 matrix")
    try:
        C = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None
    return W, C.T


@dataclass(frozen=True)
class NmpcConfig:
    h: float = 0.12
    horizon_steps: int = 5
    state_weight: np.ndarray = field(default_factory=lambda: 0.8 * np.eye(6))
    velocity_weight: np.ndarray = field(default_factory=lambda: 0.4 * np.eye(6))
    input_weight: np.ndarray = field(default_factory=lambda: 0.3 * np.eye(6))
    terminal_weight: np.ndarray = field(default_factory=lambda: 0.8 * np.eye(6))
    input_scale: float = 10.0
    interior_penalty: float = 1e3
    box_penalty: float = 1e2
    constraint_backoff: float = 1.0
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    cost_tolerance: float = 1e-9
    fd_step: float = 1e-6
    substeps: int = 2
    eps_sing: float = EPS_SING
    pitch_eps: float = PITCH_EPS
    cond_max: float = 1e12

    def __post_init__(self):
        for name in ("state_weight", "velocity_weight", "input_weight", "terminal_weight"):
            W, L = _spd_factor(name, getattr(self, name))
            object.__setattr__(self, name, W)
            object.__setattr__(self, "_L_" + name, L)
        if not (0 < self.h) or self.horizon_steps < 1:
            raise ValueError("need h > 0 and at least one horizon step")
        if self.substeps < 1 or self.input_scale <= 0 or not 0 < self.constraint_backoff <= 1:
            raise ValueError("invalid substeps, input_scale or constraint_backoff")

    @property
    def horizon(self) -> float:
        return self.h * self.horizon_steps

    def factor(self, name):
        return getattr(self, "_L_" + name)


@dataclass
class Trace:
    """Predicted quantities on the grid: rows 0..N for states, 0..N-1 for stages."""
    poses: np.ndarray
    twists: np.ndarray
    state_margins: np.ndarray
    input_margins: np.ndarray
    status: int = 0
    fail_step: int = -1
    extra: dict = field(default_factory=dict)


def _splice(base: Trace, new: Trace, k: int) -> Trace:
    def cat(a, b):
        return np.concatenate([a[:k], b], axis=0)
    extra = {key: cat(base.extra[key], new.extra[key]) for key in base.extra}
    fail = new.fail_step + k if new.fail_step >= 0 else -1
    return Trace(cat(base.poses, new.poses), cat(base.twists, new.twists),
                 cat(base.state_margins, new.state_margins),
                 cat(base.input_margins, new.input_margins), new.status, fail, extra)


class PredictionModel:
    """Interface used by the shooting solver."""
    n_inputs = 6
    state_weights = np.zeros(0)
    input_weights = np.zeros(0)

    def start(self, x0):
        return x0

    def input_reference(self, x0):
        """Input the input weight is measured from; zero unless a model needs a bias."""
        return np.zeros(self.n_inputs)

    def roll(self, start, U) -> Trace:
        raise NotImplementedError

    def state_at(self, trace: Trace, k: int):
        raise NotImplementedError

    def simulate(self, x0, U) -> Trace:
        return self.roll(self.start(x0), U)

    def simulate_from(self, base: Trace, k: int, U) -> Trace:
        if k == 0:
            return self.roll(self.start_of(base), U)
        return _splice(base, self.roll(self.state_at(base, k), U[k:]), k)

    def start_of(self, trace):
        return self.state_at(trace, 0)


class UvmsPrediction(PredictionModel):
    """Agent ``i``'s distributed model of the team, rolled out by the kernel backend."""

    def __init__(self, params: UvmsParams, obj_params: ObjectParams, geom: GraspGeometry, i: int,
                 c_i: float, cfg: NmpcConfig, backend=None):
        self.be = backend or _kernels.backend
        self.params, self.cfg = params, cfg
        self.km = params.kernel(self.be)
        self.ko = obj_params.kernel(self.be)
        self.kg = self.be.KernelGrasp(geom.offsets[i], geom.alphas[i], c_i, True)
        self.sset = StateConstraintSet.from_params(params, cfg.pitch_eps, cfg.eps_sing,
                                                   scale=cfg.constraint_backoff)
        self.iset = InputConstraintSet.from_params(params, scale=cfg.constraint_backoff)
        self.state_weights = self.sset.weights(cfg.interior_penalty, cfg.box_penalty)
        self.input_weights = self.iset.weights(cfg.box_penalty)
        self.obj_params, self.geom, self.i, self.c_i = obj_params, geom, i, c_i

    def start(self, x0):
        return np.asarray(x0.q, dtype=float), np.asarray(x0.qdot, dtype=float)

    def input_reference(self, x0):
        """Wrench carrying this agent's share of the object's net weight."""
        obj = agent_object_state(self.params, x0, self.geom, self.i)
        _, _, _, gO = object_terms(self.obj_params, ObjectState(obj.pose))
        _, JOi = object_coupling_jacobian(self.geom, self.i, obj.pose.euler)
        return np.linalg.solve(JOi.T, self.c_i * gO)

    def roll(self, start, U):
        c = self.cfg
        Q, QD, XO, VO, DET, TAU, st, fail = self.be.rollout(
            self.km, self.ko, self.kg, start[0], start[1], U, c.h, c.substeps,
            c.eps_sing, c.pitch_eps, c.cond_max)
        sm = np.atleast_2d(state_margins_from(XO[:, 4], DET, Q, QD, self.sset))
        im = self.iset.torque_bounds - np.abs(TAU)
        return Trace(XO, VO, sm, im.reshape(-1, len(self.iset.torque_bounds)), st, fail,
                     {"q": Q, "qdot": QD, "tau": TAU.reshape(-1, Q.shape[1]), "det": DET})

    def state_at(self, trace, k):
        return trace.extra["q"][k], trace.extra["qdot"][k]


class DoubleIntegratorPrediction(PredictionModel):
    """Unit-mass double integrator in six independent axes, exact zero-order hold."""

    def __init__(self, cfg: NmpcConfig):
        self.cfg = cfg
        h = cfg.h
        I = np.eye(6)
        self.A = np.block([[I, h * I], [np.zeros((6, 6)), I]])
        self.B = np.vstack([0.5 * h * h * I, h * I])

    def start(self, x0):
        return np.asarray(x0, dtype=float).reshape(12)

    def roll(self, start, U):
        U = np.asarray(U, dtype=float).reshape(-1, 6)
        X = np.zeros((U.shape[0] + 1, 12))
        X[0] = start
        for k in range(U.shape[0]):
            X[k + 1] = self.A @ X[k] + self.B @ U[k]
        K = U.shape[0]
        return Trace(X[:, :6].copy(), X[:, 6:].copy(), np.zeros((K + 1, 0)), np.zeros((K, 0)),
                     extra={"x": X})

    def state_at(self, trace, k):
        return trace.extra["x"][k]


@dataclass
class HorizonSolution:
    inputs: np.ndarray
    trace: Trace
    cost: float
    penalty: float
    status: str
    iterations: int
    cost_history: list

    @property
    def object_poses(self):
        return self.trace.poses

    @property
    def object_twists(self):
        return self.trace.twists


def residuals(trace: Trace, U, ref: Reference, cfg: NmpcConfig, model: PredictionModel,
              u_ref=None):
    """Residual vector r with cost = r @ r, and the penalty part of the cost.

    The input weight acts on ``U - u_ref`` (``u_ref`` defaults to zero).
    """
    N = U.shape[0]
    du = U if u_ref is None else U - u_ref
    sh = np.sqrt(cfg.h)
    ex = trace.poses - ref.poses[:N + 1]
    ex[:, 3:] = wrap_angle(ex[:, 3:])
    ev = trace.twists - ref.twists[:N + 1]
    parts = [
        sh * (ex[:N] @ cfg.factor("state_weight").T).ravel(),
        sh * (ev[:N] @ cfg.factor("velocity_weight").T).ravel(),
        sh * ((du / cfg.input_scale) @ cfg.factor("input_weight").T).ravel(),
        cfg.factor("terminal_weight") @ ex[N],
    ]
    pen = []
    if trace.state_margins.shape[1]:
        pen.append((np.sqrt(model.state_weights) * np.minimum(trace.state_margins[1:], 0.0)).ravel())
    if trace.input_margins.shape[1]:
        pen.append((np.sqrt(model.input_weights) * np.minimum(trace.input_margins, 0.0)).ravel())
    fail = 0.0 if trace.status == 0 else np.sqrt(cfg.interior_penalty) * (N - max(trace.fail_step, 0))
    pen.append(np.array([fail]))
    pen = np.concatenate(pen)
    return np.concatenate(parts + [pen]), float(pen @ pen)


def cost(trace: Trace, ref: Reference, U, cfg: NmpcConfig, model: PredictionModel,
         u_ref=None) -> float:
    r, _ = residuals(trace, np.asarray(U, dtype=float).reshape(-1, 6), ref, cfg, model, u_ref)
    return float(r @ r)


def solve_fhocp(model: PredictionModel, x0, ref: Reference, warm_start, cfg: NmpcConfig,
                max_iterations=None) -> HorizonSolution:
    """Levenberg-Marquardt over the scaled input blocks, with monotone acceptance."""
    N = cfg.horizon_steps
    s = cfg.input_scale
    U = np.array(warm_start, dtype=float).reshape(N, model.n_inputs)
    tr = model.simulate(x0, U)
    if tr.status != 0 and tr.fail_step == 0:
        raise InfeasibleStart(f"prediction model rejects the initial state (status {tr.status})")
    u_ref = model.input_reference(x0)
    r, pen = residuals(tr, U, ref, cfg, model, u_ref)
    c = float(r @ r)
    hist = [c]
    mu = 1e-4
    nz = U.size
    status = "max_iterations"
    max_it = cfg.max_iterations if max_iterations is None else max_iterations
    it = 0
    for it in range(1, max_it + 1):
        Jr = np.empty((r.size, nz))
        for j in range(nz):
            k, a = divmod(j, model.n_inputs)
            Up = U.copy()
            Up[k, a] += cfg.fd_step * s
            trp = model.simulate_from(tr, k, Up)
            Jr[:, j] = (residuals(trp, Up, ref, cfg, model, u_ref)[0] - r) / cfg.fd_step
        g = Jr.T @ r
        if np.max(np.abs(2.0 * g)) < cfg.gradient_tolerance:
            status = "converged"
            it -= 1
            break
        H = Jr.T @ Jr
        accepted = False
        for _ in range(16):
            dz = np.linalg.solve(H + mu * np.eye(nz), -g)
            Un = U + s * dz.reshape(U.shape)
            trn = model.simulate(x0, Un)
            rn, penn = residuals(trn, Un, ref, cfg, model, u_ref)
            cn = float(rn @ rn)
            if cn < c:
                accepted = True
                break
            mu *= 8.0
        if not accepted:
            status = "stalled"
            break
        decrease = c - cn
        U, tr, r, pen, c = Un, trn, rn, penn, cn
        hist.append(c)
        mu = max(mu / 4.0, 1e-12)
        if decrease <= cfg.cost_tolerance * (1.0 + c):
            status = "converged"
            break
    assert all(b <= a for a, b in zip(hist, hist[1:])), "cost increased across accepted steps"
    return HorizonSolution(U, tr, c, pen, status, it, hist)


def shift_warm_start(U):
    """Drop the applied block and repeat the last one."""
    U = np.asarray(U, dtype=float)
    return np.vstack([U[1:], U[-1:]])


class AgentController:
    """One agent's receding-horizon controller.

    It only ever sees its own measured joint state; the object state and the
    reference are rebuilt locally from that measurement.
    """

    def __init__(self, agent_id: int, params: UvmsParams, obj_params: ObjectParams,
                 geom: GraspGeometry, c_i: float, world: SphereWorld, nav: NavFunConfig,
                 waypoints, cfg: NmpcConfig, backend=None):
        self.agent_id = agent_id
        self.params, self.obj_params, self.geom = params, obj_params, geom
        self.c_i, self.world, self.nav, self.cfg = c_i, world, nav, cfg
        self.model = UvmsPrediction(params, obj_params, geom, agent_id, c_i, cfg, backend)
        self.sequencer = WaypointSequencer(waypoints, nav.capture_radius)
        self.previous = None
        self.leg_start = None
        self.last_solution = None
        self.last_reference = None
        self.t = 0.0

    def hover_input(self, state: JointState):
        """Wrench that carries this agent's share of the object's net weight."""
        return self.model.input_reference(state)

    def step(self, measurement: JointState, t: float = None):
        """Solve at the current sample; returns (input for the next h seconds, solution)."""
        if t is not None:
            self.t = t
        obj = agent_object_state(self.params, measurement, self.geom, self.agent_id)
        if self.sequencer.update(obj.pose.position) or self.leg_start is None:
            self.leg_start = self.t
        goal = self.sequencer.goal
        ref = propagate_reference(obj, goal, self.world, self.nav, self.cfg.horizon, self.cfg.h,
                                  self.t, self.leg_start)
        if self.previous is None:
            warm = np.tile(self.hover_input(measurement), (self.cfg.horizon_steps, 1))
        else:
            warm = shift_warm_start(self.previous)
        sol = solve_fhocp(self.model, measurement, ref, warm, self.cfg)
        self.previous = sol.inputs
        self.last_solution = sol
        self.last_reference = ref
        self.t += self.cfg.h
        return sol.inputs[0].copy(), sol

    def receding_horizon_step(self, measurement: JointState, t: float = None):
        return self.step(measurement, t)[0]
