"""Scenario files: a YAML document validated against a published JSON schema.

Numbers are SI throughout. Unknown keys are errors, and every problem is
reported with the line of the offending entry.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .errors import ScenarioError
from .grasp import GraspGeometry, LoadSharing
from .navfun import NavFunConfig
from .nmpc import NmpcConfig
from .object_model import ObjectParams, default_object_params
from .spatial import PITCH_EPS, Pose6
from .uvms_model import EPS_SING, UvmsParams, default_uvms_params
from .world import SphereWorld, clearance

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_vec6 = {"type": "array", "items": {"type": "number"}, "minItems": 6, "maxItems": 6}
_pos = {"type": "number", "exclusiveMinimum": 0}
_weight = {
    "description": "6x6 symmetric positive definite matrix, a 6-vector diagonal, or a scalar times identity",
    "oneOf": [
        {"type": "number"},
        _vec6,
        {"type": "array", "minItems": 6, "maxItems": 6, "items": _vec6},
    ],
}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "name": {"type": "string", "description": "free-form label copied into the summary"},
    "world": _obj({
        "boundary_center": {**_vec3, "description": "centre of the workspace ball [m]"},
        "boundary_radius": {**_pos, "description": "radius of the workspace ball [m]"},
        "obstacles": {"type": "array", "description": "spherical obstacles",
                      "items": _obj({"center": _vec3, "radius": _pos}, ["center", "radius"])},
        "agent_radius": {**_pos, "description": "bounding radius of one agent [m]"},
    }, ["boundary_center", "boundary_radius", "obstacles", "agent_radius"]),
    "agents": {
        "type": "array", "minItems": 1, "description": "one entry per vehicle-manipulator system",
        "items": _obj({
            "model": {"enum": ["default"],
                      "description": "placeholder dynamic model"},
            "joint_position_bound": {**_pos, "description": "|q_arm| bound [rad]"},
            "vehicle_linear_velocity_bound": {**_pos, "description": "[m/s]"},
            "vehicle_angular_velocity_bound": {**_pos, "description": "Euler-rate bound [rad/s]"},
            "arm_velocity_bound": {**_pos, "description": "[rad/s]"},
            "vehicle_force_bound": {**_pos, "description": "generalized force bound, vehicle coordinates"},
            "arm_torque_bound": {**_pos, "description": "[N m]"},
            "grasp_offset": {**_vec3, "description": "grip point in the object frame [m]"},
            "grasp_attitude": {**_vec3, "description": "end-effector Euler offset from the object frame [rad]"},
            "load_share": {"type": "number", "description": "load-sharing coefficient, all must sum to 1"},
        }, ["grasp_offset", "load_share"]),
    },
    "object": _obj({
        "model": {"enum": ["default"], "description": "placeholder slender bar"},
        "bounding_radius": {**_pos, "description": "[m]"},
        "initial_pose": {**_vec6, "description": "position [m] and ZYX Euler angles [rad]"},
    }, ["initial_pose"]),
    "navigation": _obj({
        "exponent": {"type": "number", "exclusiveMinimum": 1},
        "gain": {**_pos, "description": "raw-mode gradient gain"},
        "velocity_mode": {"enum": ["raw", "normalized"]},
        "cruise_speed": {**_pos, "description": "normalized-mode speed [m/s]"},
        "slow_radius": {**_pos, "description": "normalized-mode taper distance [m]"},
        "max_ref_speed": _pos,
        "attitude_gain": _pos,
        "max_angular_rate": _pos,
        "goal_attitude": _vec3,
        "capture_radius": _pos,
        "ramp_time": {"type": "number", "minimum": 0,
                      "description": "linear reference speed ramp after each goal switch [s]"},
        "waypoints": {"type": "array", "minItems": 1, "items": {
            "type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 6}},
    }, ["waypoints"]),
    "controller": _obj({
        "sampling_time": _pos,
        "prediction_horizon": {**_pos, "description": "T_p [s], an integer multiple of the sampling time"},
        "state_weight": _weight,
        "velocity_weight": _weight,
        "input_weight": _weight,
        "terminal_weight": _weight,
        "input_scale": _pos,
        "interior_penalty": _pos,
        "box_penalty": _pos,
        "constraint_backoff": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "max_iterations": {"type": "integer", "minimum": 1},
        "prediction_substeps": {"type": "integer", "minimum": 1},
        "singularity_threshold": _pos,
        "pitch_margin": _pos,
    }, ["sampling_time", "prediction_horizon"]),
    "simulation": _obj({
        "plant_substeps": {"type": "integer", "minimum": 1},
        "baumgarte_zeta": _pos,
        "baumgarte_omega": _pos,
        "time_budget": _pos,
        "output_dir": {"type": "string"},
    }),
}, ["world", "agents", "object", "navigation", "controller"])


@dataclass(frozen=True)
class Scenario:
    name: str
    world: SphereWorld
    agents: tuple
    obj: ObjectParams
    initial_object_pose: np.ndarray
    geom: GraspGeometry
    load_sharing: LoadSharing
    nav: NavFunConfig
    waypoints: np.ndarray
    nmpc: NmpcConfig
    plant_substeps: int = 10
    baumgarte_zeta: float = 1.0
    baumgarte_omega: float = 20.0
    time_budget: float = 300.0
    output_dir: str = "run_output"
    warnings: tuple = field(default=())

    @property
    def n_agents(self):
        return len(self.agents)


# ---------------------------------------------------------------- line lookup


def _node_at(node, path):
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def _line(root, path):
    if root is None:
        return "?"
    return str(_node_at(root, list(path)).start_mark.line + 1)


def _weight_matrix(w):
    a = np.asarray(w, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(6)
    return np.diag(a) if a.ndim == 1 else a


# ---------------------------------------------------------------- loading


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}", [str(exc)]) from exc
    return parse_scenario(text, str(path))


def default_scenario_path() -> Path:
    return Path(str(resources.files("uvms_transport") / "data" / "default_scenario.yaml"))


def default_scenario() -> Scenario:
    return load_scenario(default_scenario_path())


def parse_scenario(text: str, source="<string>") -> Scenario:
    """Parse, schema-check and semantically validate a scenario document."""
    try:
        root = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: not valid YAML", [str(exc)]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping", ["top level must be a mapping"])

    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errs:
        diags = []
        for e in errs:
            where = "/".join(map(str, e.absolute_path)) or "<root>"
            diags.append(f"{source}:{_line(root, e.absolute_path)}: {where}: {e.message}")
        raise ScenarioError(f"{source}: {len(diags)} schema error(s)\n" + "\n".join(diags), diags)

    diags = []

    def fail(path, msg):
        diags.append(f"{source}:{_line(root, path)}: {'/'.join(map(str, path))}: {msg}")

    w = doc["world"]
    ag = doc["agents"]
    ob = doc["object"]
    nv = doc["navigation"]
    ct = doc["controller"]
    sm = doc.get("simulation", {})

    obj = default_object_params()
    if "bounding_radius" in ob:
        obj = ObjectParams(obj.mass_matrix, obj.linear_damping, obj.quadratic_damping,
                           obj.net_restoring, obj.restoring_offset, ob["bounding_radius"])
    world = SphereWorld(
        boundary_center=w["boundary_center"], boundary_radius=w["boundary_radius"],
        obstacle_centers=[o["center"] for o in w["obstacles"]] or np.zeros((0, 3)),
        obstacle_radii=[o["radius"] for o in w["obstacles"]],
        agent_radius=w["agent_radius"], object_radius=obj.bounding_radius)

    agents = []
    for i, a in enumerate(ag):
        base = default_uvms_params()
        vb = list(base.joint_velocity_bounds)
        tb = list(base.actuation_bounds)
        vb = (a.get("vehicle_linear_velocity_bound", vb[0]),
              a.get("vehicle_angular_velocity_bound", vb[1]), a.get("arm_velocity_bound", vb[2]))
        tb = (a.get("vehicle_force_bound", tb[0]), a.get("arm_torque_bound", tb[1]))
        jp = base.joint_position_bounds
        if "joint_position_bound" in a:
            jp = np.full(base.arm_dof, float(a["joint_position_bound"]))
            if np.any(np.abs(base.posture_home) >= jp):
                fail(["agents", i, "joint_position_bound"], "posture home lies outside the bound")
        agents.append(base.with_changes(joint_velocity_bounds=vb, actuation_bounds=tb,
                                        joint_position_bounds=jp))

    geom = GraspGeometry([a["grasp_offset"] for a in ag],
                         [a.get("grasp_attitude", [0.0, 0.0, 0.0]) for a in ag],
                         agent_radius=w["agent_radius"])
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        geom.warn_separation()
    notes.extend(str(c.message) for c in caught)

    c = np.array([a["load_share"] for a in ag], dtype=float)
    try:
        sharing = LoadSharing(c)
    except ValueError as exc:
        fail(["agents", 0, "load_share"], f"{exc} (the per-agent dynamic load split must "
             "be a convex combination)")
        sharing = None

    nav_kw = {"k": nv.get("exponent", 4.0)}
    for key in ("gain", "velocity_mode", "cruise_speed", "slow_radius", "max_ref_speed",
                "attitude_gain", "max_angular_rate", "goal_attitude", "capture_radius",
                "ramp_time"):
        if key in nv:
            nav_kw[key] = nv[key]
    nav = NavFunConfig(**nav_kw)
    waypoints = np.array([p[:3] for p in nv["waypoints"]], dtype=float)

    x0 = np.asarray(ob["initial_pose"], dtype=float)
    if abs(x0[4]) >= np.pi / 2 - PITCH_EPS:
        fail(["object", "initial_pose"], "initial pitch is at the Euler representation singularity")

    for msg in world.diagnostics():
        fail(["world"], msg)
    if clearance(x0[:3], world) <= 0:
        fail(["object", "initial_pose"], f"initial object position is not in free space "
             f"(clearance {clearance(x0[:3], world):.3f} m)")
    for k, p in enumerate(waypoints):
        if clearance(p, world) <= 0:
            fail(["navigation", "waypoints", k],
                 f"waypoint is not in free space (clearance {clearance(p, world):.3f} m)")

    h = float(ct["sampling_time"])
    Tp = float(ct["prediction_horizon"])
    nsteps = int(round(Tp / h))
    if nsteps < 1 or abs(nsteps * h - Tp) > 1e-9 * max(1.0, Tp):
        fail(["controller", "prediction_horizon"],
             f"prediction horizon {Tp} is not a positive integer multiple of the sampling time {h}")
    nm_kw = {"h": h, "horizon_steps": max(nsteps, 1)}
    rename = {"input_scale": "input_scale", "interior_penalty": "interior_penalty",
              "box_penalty": "box_penalty", "constraint_backoff": "constraint_backoff",
              "max_iterations": "max_iterations", "prediction_substeps": "substeps",
              "singularity_threshold": "eps_sing", "pitch_margin": "pitch_eps"}
    for k_yaml, k_cfg in rename.items():
        if k_yaml in ct:
            nm_kw[k_cfg] = ct[k_yaml]
    for name in ("state_weight", "velocity_weight", "input_weight", "terminal_weight"):
        if name in ct:
            W = _weight_matrix(ct[name])
            if not np.allclose(W, W.T):
                fail(["controller", name], f"{name} is not symmetric")
                continue
            try:
                np.linalg.cholesky(W)
            except np.linalg.LinAlgError:
                fail(["controller", name], f"{name} is not positive definite")
                continue
            nm_kw[name] = W
    nmpc = None
    if not diags:
        try:
            nmpc = NmpcConfig(**nm_kw)
        except ValueError as exc:
            fail(["controller"], str(exc))

    substeps = int(sm.get("plant_substeps", 10))
    if diags:
        raise ScenarioError(f"{source}: {len(diags)} validation error(s)\n" + "\n".join(diags), diags)
    return Scenario(
        name=doc.get("name", Path(source).stem), world=world, agents=tuple(agents), obj=obj,
        initial_object_pose=x0, geom=geom, load_sharing=sharing, nav=nav, waypoints=waypoints,
        nmpc=nmpc, plant_substeps=substeps,
        baumgarte_zeta=float(sm.get("baumgarte_zeta", 1.0)),
        baumgarte_omega=float(sm.get("baumgarte_omega", 20.0)),
        time_budget=float(sm.get("time_budget", 300.0)),
        output_dir=sm.get("output_dir", "run_output"), warnings=tuple(notes))


def scenario_to_dict(sc: Scenario) -> dict:
    """Plain summary of the resolved scenario for run metadata."""
    return {
        "name": sc.name,
        "n_agents": sc.n_agents,
        "initial_object_pose": sc.initial_object_pose.tolist(),
        "waypoints": sc.waypoints.tolist(),
        "load_sharing": sc.load_sharing.c.tolist(),
        "sampling_time": sc.nmpc.h,
        "horizon_steps": sc.nmpc.horizon_steps,
        "plant_substeps": sc.plant_substeps,
        "time_budget": sc.time_budget,
        "eps_sing": EPS_SING,
    }
