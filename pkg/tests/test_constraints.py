import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from uvms_transport.checks import neutral_undamped
from uvms_transport.constraints import (InputConstraintSet, StateConstraintSet, applied_torque,
                                        input_violations, penalty, state_violations)
from uvms_transport.grasp import GraspGeometry
from uvms_transport.uvms_model import (JointState, baseline_torque, default_uvms_params,
                                       geometric_jacobian)

G = GraspGeometry([[0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]])


def home(params, qdot=None):
    q = np.zeros(10)
    q[6:] = params.posture_home
    return JointState(q, np.zeros(10) if qdot is None else np.asarray(qdot, float))


def test_home_rest_state_is_feasible(params):
    m = state_violations(home(params), params, G, 0, StateConstraintSet.from_params(params))
    assert m.shape == (16,) and np.all(m > 0)


def test_joint_position_overshoot(params):
    s = home(params)
    s.q[7] = 2.1
    m = state_violations(s, params, G, 0, StateConstraintSet.from_params(params))
    assert m[2 + 1] == pytest.approx(-0.1)


def test_vehicle_speed_overshoot(params):
    qd = np.zeros(10)
    qd[0] = 0.6
    m = state_violations(home(params, qd), params, G, 0, StateConstraintSet.from_params(params))
    assert m[6] == pytest.approx(-0.1)


def test_backed_off_bounds(params):
    c = StateConstraintSet.from_params(params, scale=0.85)
    assert_allclose(c.velocity_bounds[:3], 0.425)
    assert_allclose(InputConstraintSet.from_params(params, 0.85).torque_bounds[0], 8.5)


def test_offsetting_wrench_leaves_full_margins(params):
    # neutrally buoyant at home and at rest the baseline torque vanishes
    P = neutral_undamped(params)
    s = home(P)
    assert_allclose(baseline_torque(P, s), 0.0, atol=1e-14)
    iset = InputConstraintSet.from_params(P)
    assert_allclose(input_violations(np.zeros(6), s, P, iset), iset.torque_bounds)


def test_vehicle_force_overshoot(params):
    P = neutral_undamped(params)
    m = input_violations([11.0, 0, 0, 0, 0, 0], home(P), P, InputConstraintSet.from_params(P))
    assert m[0] == pytest.approx(-1.0)


def test_arm_torque_overshoot(params):
    P = neutral_undamped(params)
    s = home(P)
    e = geometric_jacobian(P, s.q)[:, 6]
    u = 2.5 * e / (e @ e)
    m = input_violations(u, s, P, InputConstraintSet.from_params(P))
    assert m[6] == pytest.approx(-0.5)


@given(st.integers(0, 2 ** 32 - 1))
def test_input_margins_follow_applied_torque(seed):
    P = default_uvms_params()
    rng = np.random.default_rng(seed)
    s = JointState(np.r_[rng.normal(size=6) * 0.3, rng.uniform(-1, 1, 4)], rng.normal(size=10) * 0.1)
    u = rng.normal(size=6)
    iset = InputConstraintSet.from_params(P)
    assert_allclose(input_violations(u, s, P, iset),
                    iset.torque_bounds - np.abs(geometric_jacobian(P, s.q).T @ u + baseline_torque(P, s)),
                    atol=1e-12)
    assert_allclose(applied_torque(u, s, P), geometric_jacobian(P, s.q).T @ u + baseline_torque(P, s),
                    atol=1e-12)


def test_penalty_examples():
    assert penalty([0.5, 1.0, 2.0], [10, 10, 10]) == 0.0
    assert penalty([0.5, -1.0], [10.0, 10.0]) == 10.0


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(0, 1e3))
def test_penalty_matches_summation(margins, w):
    ref = 0.0
    for m in margins:
        if m < 0:
            ref += w * m * m
    assert penalty(margins, w) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_nonpositive_bounds_rejected():
    with pytest.raises(ValueError):
        InputConstraintSet(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        StateConstraintSet(0.05, 0.0, np.ones(4), np.ones(10))
