"""Navigation-function reference generation for the payload.

The potential over object position is

    phi = gamma / (gamma**k + beta)**(1/k)

with ``gamma`` the squared distance to the goal and ``beta`` the product of
the boundary and obstacle functions of the sphere world inflated by the team
radius. Descending ``phi`` keeps the team ball inside free space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfFreeSpace
from .object_model import ObjectState
from .spatial import (PITCH_EPS, Pose6, Twist, angular_rate_matrix, euler_rate_jacobian_inv,
                      euler_to_rotation, rotation_error, wrap_angle)
from .world import SphereWorld, clearance

VELOCITY_MODES = ("raw", "normalized")


@dataclass(frozen=True)
class NavFunConfig:
    k: float = 4.0
    gain: float = 0.5                  # K_NF, raw mode
    max_ref_speed: float = 0.5
    velocity_mode: str = "normalized"
    cruise_speed: float = 0.3          # normalized mode speed away from the goal
    slow_radius: float = 1.0           # normalized mode: speed ramps down inside this distance
    attitude_gain: float = 0.5
    max_angular_rate: float = 0.05
    goal_attitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    capture_radius: float = 0.3
    ramp_time: float = 0.0             # linear speed ramp after each goal switch; 0 disables

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError("navigation exponent k must exceed 1")
        if not (self.gain > 0 and self.max_ref_speed > 0 and self.cruise_speed > 0
                and self.slow_radius > 0):
            raise ValueError("gain, speeds and slow_radius must be positive")
        if self.ramp_time < 0:
            raise ValueError("ramp_time must be non-negative")
        if self.velocity_mode not in VELOCITY_MODES:
            raise ValueError(f"velocity_mode must be one of {VELOCITY_MODES}")
        object.__setattr__(self, "goal_attitude",
                           np.asarray(self.goal_attitude, dtype=float).reshape(3))


def _beta(x, world: SphereWorld):
    """beta and its gradient."""
    R = world.team_radius
    dc = x - world.boundary_center
    b0 = (world.boundary_radius - R) ** 2 - dc @ dc
    g0 = -2.0 * dc
    dm = x - world.obstacle_centers
    bm = np.einsum("ij,ij->i", dm, dm) - (world.obstacle_radii + R) ** 2
    factors = np.append(bm, b0)
    grads = np.vstack([2.0 * dm, g0])
    beta = float(np.prod(factors))
    # product rule without dividing by possibly tiny factors
    grad = np.zeros(3)
    for j in range(factors.size):
        grad += np.prod(np.delete(factors, j)) * grads[j]
    return beta, grad


def _check_free(x, world):
    c = clearance(x, world)
    if not c > 0:
        raise OutOfFreeSpace(f"point {np.round(x, 4).tolist()} has clearance {c:.4f} m")


def nf_value(x, goal, world: SphereWorld, cfg: NavFunConfig) -> float:
    x = np.asarray(x, dtype=float)[:3]
    _check_free(x, world)
    d = x - np.asarray(goal, dtype=float)[:3]
    gamma = float(d @ d)
    if gamma == 0.0:
        return 0.0
    beta, _ = _beta(x, world)
    return gamma / (gamma ** cfg.k + beta) ** (1.0 / cfg.k)


def nf_gradient(x, goal, world: SphereWorld, cfg: NavFunConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float)[:3]
    _check_free(x, world)
    d = x - np.asarray(goal, dtype=float)[:3]
    gamma = float(d @ d)
    if gamma == 0.0:
        return np.zeros(3)
    beta, dbeta = _beta(x, world)
    k = cfg.k
    s = gamma ** k + beta
    return (beta * 2.0 * d - (gamma / k) * dbeta) / s ** (1.0 + 1.0 / k)


def _angular_reference(euler, cfg: NavFunConfig):
    w = cfg.attitude_gain * rotation_error(euler_to_rotation(cfg.goal_attitude),
                                           euler_to_rotation(euler))
    nw = np.linalg.norm(w)
    if nw > cfg.max_angular_rate:
        w *= cfg.max_angular_rate / nw
    return w


def ramp_factor(t, leg_start, cfg: NavFunConfig) -> float:
    """Speed scale in [0, 1] growing linearly over ``ramp_time`` after ``leg_start``."""
    if cfg.ramp_time <= 0 or leg_start is None:
        return 1.0
    return float(np.clip((t - leg_start) / cfg.ramp_time, 0.0, 1.0))


def desired_velocity(object_state, goal, world: SphereWorld, cfg: NavFunConfig,
                     pitch_eps=PITCH_EPS, speed_scale=1.0) -> Twist:
    """Reference object twist at ``object_state`` (inertial linear and angular velocity).

    ``raw`` mode scales the negated gradient by the gain; ``normalized`` mode
    follows the gradient direction at ``cruise_speed``, tapering linearly inside
    ``slow_radius`` of the goal. Both clamp to ``max_ref_speed``; the linear
    part is then multiplied by ``speed_scale``.
    """
    pose = object_state.pose if isinstance(object_state, ObjectState) else object_state
    euler_rate_jacobian_inv(pose.euler, pitch_eps)   # domain check
    x = pose.position
    grad = nf_gradient(x, goal, world, cfg)
    if cfg.velocity_mode == "raw":
        v = -cfg.gain * grad
    else:
        ng = np.linalg.norm(grad)
        dist = np.linalg.norm(x - np.asarray(goal, dtype=float)[:3])
        v = (np.zeros(3) if ng == 0.0
             else -cfg.cruise_speed * min(1.0, dist / cfg.slow_radius) * grad / ng)
    sp = np.linalg.norm(v)
    if sp > cfg.max_ref_speed:
        v *= cfg.max_ref_speed / sp
    return Twist(speed_scale * v, _angular_reference(pose.euler, cfg))


@dataclass
class Reference:
    """Reference object poses and twists on the prediction grid."""
    times: np.ndarray
    poses: np.ndarray     # (K+1) x 6
    twists: np.ndarray    # (K+1) x 6


def propagate_reference(object_state: ObjectState, goal, world: SphereWorld, cfg: NavFunConfig,
                        horizon: float, step: float, t0=0.0, leg_start=None) -> Reference:
    """Integrate the reference field forward from the given object state with RK4.

    With ``leg_start`` set, speeds follow :func:`ramp_factor` on the absolute clock.
    """
    n = int(round(horizon / step))
    if n < 0 or abs(n * step - horizon) > 1e-9:
        raise ValueError("horizon must be a non-negative integer multiple of step")

    def field_(x, t):
        tw = desired_velocity(Pose6.from_vector(x), goal, world, cfg,
                              speed_scale=ramp_factor(t, leg_start, cfg)).as_vector()
        return tw, euler_rate_jacobian_inv(x[3:], PITCH_EPS) @ tw

    x = object_state.pose.as_vector()
    poses = np.zeros((n + 1, 6))
    twists = np.zeros((n + 1, 6))
    for j in range(n + 1):
        t = t0 + j * step
        tw, k1 = field_(x, t)
        poses[j], twists[j] = x, tw
        if j == n:
            break
        k2 = field_(x + 0.5 * step * k1, t + 0.5 * step)[1]
        k3 = field_(x + 0.5 * step * k2, t + 0.5 * step)[1]
        k4 = field_(x + step * k3, t + step)[1]
        x = x + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        x[3:] = wrap_angle(x[3:])
    return Reference(t0 + step * np.arange(n + 1), poses, twists)


class WaypointSequencer:
    """Active-goal bookkeeping: advance when within ``capture_radius`` of the current waypoint."""

    def __init__(self, waypoints, capture_radius=0.3):
        self.waypoints = np.array(waypoints, dtype=float).reshape(-1, 3)
        self.capture_radius = float(capture_radius)
        self.index = 0

    @property
    def goal(self):
        return self.waypoints[min(self.index, len(self.waypoints) - 1)]

    @property
    def finished(self):
        return self.index >= len(self.waypoints)

    def update(self, position):
        """Advance past every waypoint already captured; returns True if the index changed."""
        start = self.index
        while (not self.finished
               and np.linalg.norm(np.asarray(position)[:3] - self.waypoints[self.index])
               <= self.capture_radius):
            self.index += 1
        return self.index != start


def descend(x0, goal, world: SphereWorld, cfg: NavFunConfig, step=0.05, tol=0.1,
            max_steps=5000):
    """Normalized gradient descent on the potential.

    Returns (reached, path, min_clearance). Steps shrink near the goal so the
    walk cannot overshoot it.
    """
    x = np.asarray(x0, dtype=float)[:3].copy()
    goal = np.asarray(goal, dtype=float)[:3]
    path = [x.copy()]
    cmin = clearance(x, world)
    for _ in range(max_steps):
        dist = np.linalg.norm(x - goal)
        if dist <= tol:
            return True, np.array(path), cmin
        g = nf_gradient(x, goal, world, cfg)
        ng = np.linalg.norm(g)
        if ng == 0.0 or not np.isfinite(ng):
            break
        x = x - min(step, 0.5 * dist) * g / ng
        c = clearance(x, world)
        cmin = min(cmin, c)
        path.append(x.copy())
        if c <= 0:
            break
    return False, np.array(path), cmin
