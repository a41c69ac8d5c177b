import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uvms_transport.world import SphereWorld, clearance, default_world, in_free_space

W = default_world()
R = W.team_radius
seeds = st.integers(0, 2 ** 32 - 1)


def test_team_radius():
    assert R == pytest.approx(1.6)


def test_clearance_at_obstacle_centre():
    assert clearance(W.obstacle_centers[0], W) == pytest.approx(-(0.6 + R))


def test_clearance_zero_on_inflated_surface():
    x = W.obstacle_centers[0] + np.array([0.0, -(0.6 + R), 0.0])
    assert clearance(x, W) == pytest.approx(0.0, abs=1e-12)


def test_clearance_between_first_two_obstacles():
    # equidistant from (4, -4.5) and (9, -1.5): hypot(2.5, 1.5) minus inflated radius
    assert clearance([6.5, -3.0, 0.75], W) == pytest.approx(math.hypot(2.5, 1.5) - 0.6 - 1.6, abs=1e-12)


def test_free_space_membership():
    assert in_free_space([12.0, 6.5, 0.65], W)
    assert not in_free_space(W.obstacle_centers[1], W)
    surface = W.boundary_center + np.array([0.0, 0.0, W.boundary_radius])
    assert not in_free_space(surface, W)


@given(seeds)
def test_clearance_is_one_lipschitz(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-5, 15, size=(2, 3))
    assert abs(clearance(a, W) - clearance(b, W)) <= np.linalg.norm(a - b) + 1e-12


def test_default_world_is_valid():
    assert W.diagnostics([("start", [-0.7, 0.0, 0.72]), ("goal", [12.0, 6.5, 0.65])]) == []


def test_invalid_worlds_are_diagnosed():
    overlap = SphereWorld([0, 0, 0], 10.0, [[0, 0, 0], [1, 0, 0]], [0.5, 0.5])
    assert any("overlap" in d for d in overlap.diagnostics())
    outside = SphereWorld([0, 0, 0], 5.0, [[4.8, 0, 0]], [0.5])
    assert any("not strictly inside" in d for d in outside.diagnostics())
    assert any("free space" in d for d in W.diagnostics([("start", W.obstacle_centers[0])]))


def test_mismatched_obstacle_lists_rejected():
    with pytest.raises(ValueError):
        SphereWorld([0, 0, 0], 5.0, [[1, 0, 0]], [0.5, 0.5])
