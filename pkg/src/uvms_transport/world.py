"""Sphere-world workspace: a bounding ball with spherical obstacles.

The team (agents plus payload) is abstracted as a ball of radius
``team_radius = agent_radius + object_radius`` centred on the object.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SphereWorld:
    boundary_center: np.ndarray
    boundary_radius: float
    obstacle_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    obstacle_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    agent_radius: float = 1.0
    object_radius: float = 0.6

    def __post_init__(self):
        c = np.asarray(self.obstacle_centers, dtype=float).reshape(-1, 3)
        r = np.asarray(self.obstacle_radii, dtype=float).reshape(-1)
        if c.shape[0] != r.shape[0]:
            raise ValueError("obstacle centers and radii differ in count")
        object.__setattr__(self, "boundary_center",
                           np.asarray(self.boundary_center, dtype=float).reshape(3))
        object.__setattr__(self, "obstacle_centers", c)
        object.__setattr__(self, "obstacle_radii", r)

    @property
    def team_radius(self) -> float:
        return self.agent_radius + self.object_radius

    @property
    def n_obstacles(self) -> int:
        return self.obstacle_radii.shape[0]

    def diagnostics(self, points=()):
        """Violated workspace invariants, as readable strings; empty when valid.

        ``points`` are (label, position) pairs that must lie in free space.
        """
        out = []
        R = self.team_radius
        if self.boundary_radius <= 0 or np.any(self.obstacle_radii <= 0):
            out.append("boundary and obstacle radii must be positive")
        if self.agent_radius <= 0 or self.object_radius <= 0:
            out.append("agent and object radii must be positive")
        for m in range(self.n_obstacles):
            d = np.linalg.norm(self.obstacle_centers[m] - self.boundary_center)
            if d + self.obstacle_radii[m] >= self.boundary_radius:
                out.append(f"obstacle {m} is not strictly inside the boundary")
            for k in range(m + 1, self.n_obstacles):
                dk = np.linalg.norm(self.obstacle_centers[m] - self.obstacle_centers[k])
                if dk <= self.obstacle_radii[m] + self.obstacle_radii[k] + 2 * R:
                    out.append(f"inflated obstacles {m} and {k} overlap")
        for label, x in points:
            c = clearance(x, self)
            if not c > 0:
                out.append(f"{label} is not in free space (clearance {c:.3f} m)")
        return out


def clearance_components(x, world: SphereWorld) -> np.ndarray:
    """Team-ball clearance to each obstacle, then to the boundary."""
    x = np.asarray(x, dtype=float)[:3]
    R = world.team_radius
    obs = np.linalg.norm(world.obstacle_centers - x, axis=1) - world.obstacle_radii - R
    bnd = world.boundary_radius - np.linalg.norm(x - world.boundary_center) - R
    return np.append(obs, bnd)


def clearance(x, world: SphereWorld) -> float:
    """Signed team-ball clearance; negative means collision."""
    return float(clearance_components(x, world).min())


def in_free_space(x, world: SphereWorld) -> bool:
    return clearance(x, world) > 0.0


def default_world() -> SphereWorld:
    """Three column obstacles at transport depth inside a 14 m boundary ball."""
    return SphereWorld(
        boundary_center=np.array([5.65, 0.25, 0.75]),
        boundary_radius=14.0,
        obstacle_centers=np.array([[4.0, -4.5, 0.75], [9.0, -1.5, 0.75], [9.0, 5.0, 0.75]]),
        obstacle_radii=np.array([0.6, 0.6, 0.6]),
        agent_radius=1.0,
        object_radius=0.6,
    )
