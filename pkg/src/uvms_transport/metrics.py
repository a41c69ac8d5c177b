"""Run summaries and the post-hoc closed-loop acceptance checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

GRASP_TOL = 1e-5
TRANSIENT_ALLOWANCE = 0.02
TRANSIENT_WINDOW = 5.0


@dataclass
class RunSummary:
    scenario: str
    terminated: str
    final_time: float
    capture_times: list
    min_clearance: float
    min_det: list
    max_grasp_residual: float
    max_bound_overshoot: dict
    max_steady_overshoot: dict
    mean_iterations: float
    max_iterations: int
    mean_solve_time: float
    fallbacks: int
    tracking_rms: list
    isolation_passed: bool
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def capture_times(t, x_obj, waypoints, radius):
    """First time the object comes within ``radius`` of each waypoint, in visiting order."""
    out = []
    k0 = 0
    for w in np.asarray(waypoints, dtype=float):
        d = np.linalg.norm(x_obj[k0:, :3] - w, axis=1)
        hit = np.flatnonzero(d <= radius)
        if hit.size == 0:
            out.append(None)
            break
        k0 += int(hit[0])
        out.append(float(t[k0]))
    out += [None] * (len(waypoints) - len(out))
    return out


def transient_mask(t, events, window=TRANSIENT_WINDOW):
    """True where ``t`` lies within ``window`` seconds after the start or an event."""
    t = np.asarray(t)
    mask = t < t[0] + window
    for e in events:
        if e is not None:
            mask |= (t >= e) & (t < e + window)
    return mask


def bound_overshoot(margins, bounds):
    """Relative overshoot per logged row: max over agents and channels of -margin / bound."""
    rel = -np.asarray(margins) / np.asarray(bounds)
    return np.maximum(rel, 0.0)


def summarize(log, scenario) -> RunSummary:
    sc = scenario
    prm = sc.agents[0]
    na = prm.arm_dof
    bounds = np.concatenate([prm.joint_position_bounds, prm.velocity_bound_vector(),
                             prm.actuation_bound_vector()])
    groups = {"joint_position": slice(0, na), "velocity": slice(na, na + prm.n),
              "torque": slice(na + prm.n, None)}
    caps = capture_times(log.t, log.x_obj, sc.waypoints, sc.nav.capture_radius)
    over = bound_overshoot(log.margins, bounds)          # T x N x channels
    steady = ~transient_mask(log.t, caps[:-1])
    max_over = {k: float(over[:, :, s].max()) for k, s in groups.items()}
    max_steady = {k: float(over[steady][:, :, s].max()) if steady.any() else 0.0
                  for k, s in groups.items()}
    ref = np.asarray(log.reference_twist)
    idx = np.searchsorted(log.t, log.sample_t)
    idx = np.minimum(idx, len(log.t) - 1)
    err = log.v_obj[idx][:, None, :] - ref if ref.size else np.zeros((1, 1, 6))
    rms = np.sqrt(np.mean(err ** 2, axis=(0, 1))).tolist()
    it = np.asarray(log.solve_iterations)
    it = it[it >= 0]
    st = np.asarray(log.solve_time)
    s = RunSummary(
        scenario=sc.name, terminated=str(log.terminated), final_time=float(log.t[-1]),
        capture_times=caps, min_clearance=float(np.min(log.clearance)),
        min_det=np.min(log.det, axis=0).tolist(),
        max_grasp_residual=float(np.max(log.grasp_residual)),
        max_bound_overshoot=max_over, max_steady_overshoot=max_steady,
        mean_iterations=float(it.mean()) if it.size else 0.0,
        max_iterations=int(it.max()) if it.size else 0,
        mean_solve_time=float(st.mean()) if st.size else 0.0,
        fallbacks=int(log.fallbacks), tracking_rms=rms,
        isolation_passed=bool(log.isolation.get("passed", False)))
    s.checks = {
        "waypoints_captured": all(c is not None for c in caps),
        "clearance_positive": s.min_clearance > 0,
        "det_positive": min(s.min_det) > 0,
        "bounds_within_transient_allowance": max(max_over.values()) <= TRANSIENT_ALLOWANCE,
        "bounds_exact_in_steady_intervals": max(max_steady.values()) == 0.0,
        "grasp_residual": s.max_grasp_residual <= GRASP_TOL,
        "isolation": s.isolation_passed,
    }
    return s
