import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from uvms_transport.errors import OutOfFreeSpace
from uvms_transport.navfun import (NavFunConfig, WaypointSequencer, descend, desired_velocity,
                                   nf_gradient, nf_value, propagate_reference)
from uvms_transport.object_model import ObjectState
from uvms_transport.spatial import Pose6
from uvms_transport.world import SphereWorld, clearance, default_world

W = default_world()
CFG = NavFunConfig()
GOAL = np.array([12.0, 6.5, 0.65])
seeds = st.integers(0, 2 ** 32 - 1)


def free_point(rng, world=W):
    while True:
        x = world.boundary_center + rng.uniform(-12, 12, 3)
        if clearance(x, world) > 0.05:
            return x


def reference_value(x, goal, centre, rb, obstacles, R, k):
    # independent reimplementation of the potential, written out factor by factor
    gamma = sum((a - b) ** 2 for a, b in zip(x, goal))
    beta = (rb - R) ** 2 - sum((a - b) ** 2 for a, b in zip(x, centre))
    for c, r in obstacles:
        beta *= sum((a - b) ** 2 for a, b in zip(x, c)) - (r + R) ** 2
    return gamma / (gamma ** k + beta) ** (1.0 / k)


def test_value_and_gradient_vanish_at_goal():
    assert nf_value(GOAL, GOAL, W, CFG) == 0.0
    assert_allclose(nf_gradient(GOAL, GOAL, W, CFG), np.zeros(3))


def test_value_tends_to_one_at_inflated_surface():
    x = W.obstacle_centers[0] + np.array([0.0, -(0.6 + W.team_radius + 1e-9), 0.0])
    assert nf_value(x, GOAL, W, CFG) == pytest.approx(1.0, abs=1e-6)


def test_value_matches_direct_formula_one_obstacle():
    w1 = SphereWorld([0, 0, 0], 10.0, [[3.0, 0.0, 0.0]], [0.5], agent_radius=1.0, object_radius=0.5)
    x, g = np.array([0.5, 2.5, -1.0]), np.array([5.0, 1.0, 0.0])
    ref = reference_value(x, g, [0, 0, 0], 10.0, [([3.0, 0.0, 0.0], 0.5)], 1.5, 4.0)
    assert nf_value(x, g, w1, CFG) == pytest.approx(ref, rel=1e-13)


@given(seeds)
def test_value_lies_in_unit_interval(seed):
    x = free_point(np.random.default_rng(seed))
    assert 0.0 <= nf_value(x, GOAL, W, CFG) < 1.0


@given(seeds)
def test_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    x = free_point(rng)
    h = 1e-6
    fd = np.array([(nf_value(x + h * e, GOAL, W, CFG) - nf_value(x - h * e, GOAL, W, CFG)) / (2 * h)
                   for e in np.eye(3)])
    g = nf_gradient(x, GOAL, W, CFG)
    assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1e-3)


def test_gradient_pushes_away_from_obstacles_near_surface():
    rng = np.random.default_rng(0)
    for m in range(W.n_obstacles):
        for _ in range(10):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            x = W.obstacle_centers[m] + (0.6 + W.team_radius + 1e-3) * n
            if clearance(x, W) <= 0:
                continue
            # descending the potential moves outward along the obstacle normal
            assert -nf_gradient(x, GOAL, W, CFG) @ n > 0


def test_outside_free_space_raises():
    with pytest.raises(OutOfFreeSpace):
        nf_value(W.obstacle_centers[2], GOAL, W, CFG)
    with pytest.raises(OutOfFreeSpace):
        nf_gradient(W.obstacle_centers[2], GOAL, W, CFG)


def test_desired_velocity_zero_at_goal():
    tw = desired_velocity(Pose6(GOAL, np.zeros(3)), GOAL, W, CFG)
    assert_allclose(tw.as_vector(), np.zeros(6))


def test_desired_velocity_heads_to_goal_in_open_water():
    open_world = SphereWorld([0, 0, 0], 100.0)
    x = np.array([1.0, 2.0, -1.0])
    for mode in ("raw", "normalized"):
        v = desired_velocity(Pose6(x, np.zeros(3)), [20.0, -5.0, 3.0], open_world,
                             NavFunConfig(velocity_mode=mode)).linear
        d = np.array([20.0, -5.0, 3.0]) - x
        assert v @ d / (np.linalg.norm(v) * np.linalg.norm(d)) > 0.999


@given(seeds, st.sampled_from(["raw", "normalized"]), st.floats(0.1, 50.0))
def test_reference_speed_is_clamped(seed, mode, gain):
    x = free_point(np.random.default_rng(seed))
    cfg = NavFunConfig(gain=gain, cruise_speed=2.0, velocity_mode=mode)
    assert np.linalg.norm(desired_velocity(Pose6(x, np.zeros(3)), GOAL, W, cfg).linear) <= 0.5 + 1e-12


def test_angular_reference_is_bounded_and_levels():
    tw = desired_velocity(Pose6(GOAL, [0.3, 0.0, 0.0]), GOAL, W, CFG)
    assert np.linalg.norm(tw.angular) == pytest.approx(CFG.max_angular_rate)
    assert tw.angular[0] < 0


def test_horizon_grid_and_stationary_goal():
    s = ObjectState.from_vectors(np.concatenate([GOAL, np.zeros(3)]))
    ref = propagate_reference(s, GOAL, W, CFG, horizon=0.6, step=0.12)
    assert ref.poses.shape == (6, 6)
    assert_allclose(np.diff(ref.times), 0.12)
    assert_allclose(ref.poses, np.tile(ref.poses[0], (6, 1)))


def test_horizon_must_be_multiple_of_step():
    s = ObjectState.from_vectors(np.concatenate([GOAL, np.zeros(3)]))
    with pytest.raises(ValueError):
        propagate_reference(s, GOAL, W, CFG, horizon=0.65, step=0.12)


def test_propagation_is_deterministic():
    s1 = ObjectState.from_vectors([-0.7, 0.0, 0.72, 0.04, -0.07, 0.0])
    s2 = ObjectState.from_vectors([-0.7, 0.0, 0.72, 0.04, -0.07, 0.0])
    a = propagate_reference(s1, [6, -6, 0.85], W, CFG, 0.6, 0.12)
    b = propagate_reference(s2, [6, -6, 0.85], W, CFG, 0.6, 0.12)
    assert np.array_equal(a.poses, b.poses) and np.array_equal(a.twists, b.twists)


def test_sequencer_advances_and_copies():
    wps = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    seq = WaypointSequencer(wps, 0.3)
    wps[0, 0] = 99.0
    assert seq.goal[0] == 0.0
    assert not seq.update([0.5, 0, 0])
    assert seq.update([0.1, 0, 0]) and seq.index == 1
    assert seq.update([1.0, 0, 0]) and seq.finished


def test_descent_reaches_goal_without_collision():
    rng = np.random.default_rng(5)
    for _ in range(5):
        ok, path, cmin = descend(free_point(rng), GOAL, W, CFG)
        assert ok and cmin > 0


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        NavFunConfig(k=1.0)
    with pytest.raises(ValueError):
        NavFunConfig(velocity_mode="fast")
