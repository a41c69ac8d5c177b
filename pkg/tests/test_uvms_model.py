import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from uvms_transport.checks import fd_jacobian, neutral_undamped
from uvms_transport.errors import DimensionError, NearSingular
from uvms_transport.uvms_model import (JointState, baseline_torque, default_uvms_params,
                                       end_effector_transform, forward_kinematics,
                                       geometric_jacobian, jacobian_time_derivative,
                                       joint_space_terms, kinetic_energy, singularity_measure,
                                       task_space_terms)

P = default_uvms_params()
seeds = st.integers(0, 2 ** 32 - 1)

# end-effector pose at q = 0, from the chain by hand: arm base 0.6 m ahead and
# 0.1 m below the vehicle origin, two 0.15 m links and a 0.1 m tool along x
HOME_EE = np.array([1.0, 0.0, -0.1])


def random_q(rng, arm_scale=1.2):
    return np.concatenate([rng.normal(size=3), rng.uniform(-1.0, 1.0, size=3),
                           rng.uniform(-arm_scale, arm_scale, size=4)])


def test_home_pose():
    pose = forward_kinematics(P, np.zeros(10))
    assert_allclose(pose.position, HOME_EE, atol=1e-12)
    assert_allclose(pose.euler, np.zeros(3), atol=1e-12)


def test_vehicle_translation_moves_end_effector_rigidly():
    q = np.zeros(10)
    q[:3] = [1.5, -2.0, 0.25]
    assert_allclose(forward_kinematics(P, q).position, HOME_EE + q[:3], atol=1e-12)


def test_vehicle_yaw_half_turn_reflects_through_z_axis():
    q = np.zeros(10)
    q[5] = np.pi
    assert_allclose(forward_kinematics(P, q).position, [-1.0, 0.0, -0.1], atol=1e-12)


def test_wrong_dimension_is_rejected():
    with pytest.raises(DimensionError):
        forward_kinematics(P, np.zeros(9))


@given(seeds)
def test_zero_rates_give_zero_twist(seed):
    q = random_q(np.random.default_rng(seed))
    assert_allclose(geometric_jacobian(P, q) @ np.zeros(10), np.zeros(6))


def test_vehicle_translation_columns():
    rng = np.random.default_rng(0)
    J = geometric_jacobian(P, random_q(rng))
    assert_allclose(J[:, :3], np.vstack([np.eye(3), np.zeros((3, 3))]), atol=1e-14)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        q = random_q(rng)
        Jf = fd_jacobian(P, q)
        worst = max(worst, np.linalg.norm(geometric_jacobian(P, q) - Jf) / np.linalg.norm(Jf))
    assert worst <= 1e-5


def test_jacobian_rate_zero_at_rest():
    q = random_q(np.random.default_rng(2))
    assert_allclose(jacobian_time_derivative(P, q, np.zeros(10)), np.zeros((6, 10)))


@given(seeds)
def test_jacobian_rate_step_halving(seed):
    rng = np.random.default_rng(seed)
    q, qd = random_q(rng), rng.normal(size=10)
    a = jacobian_time_derivative(P, q, qd, step=1e-4)
    b = jacobian_time_derivative(P, q, qd, step=0.5e-4)
    assert np.abs(a - b).max() <= 1e-4


def test_jacobian_rate_translation_invariance():
    rng = np.random.default_rng(3)
    q = random_q(rng)
    qd = np.r_[rng.normal(size=3), np.zeros(7)]
    assert_allclose(jacobian_time_derivative(P, q, qd), np.zeros((6, 10)), atol=1e-9)


@given(seeds)
def test_singularity_measure_is_product_of_squared_singular_values(seed):
    q = random_q(np.random.default_rng(seed))
    s = np.linalg.svd(geometric_jacobian(P, q), compute_uv=False)
    ref = float(np.prod(s ** 2))
    assert singularity_measure(P, q) > 0
    assert abs(singularity_measure(P, q) - ref) <= 1e-9 * ref


def test_stretched_arm_is_singular():
    q = np.zeros(10)
    q[6:] = [0.0, np.pi / 2, 0.0, 0.0]
    s = np.linalg.svd(geometric_jacobian(P, q)[:, 6:], compute_uv=False)
    assert singularity_measure(P, q, arm_only=True) == pytest.approx(float(np.prod(s ** 2)), abs=1e-20)
    assert singularity_measure(P, q, arm_only=True) < 1e-20
    q[7] = np.pi / 2 - 0.3
    assert singularity_measure(P, q, arm_only=True) > 1e-6


def test_static_state_has_no_velocity_terms():
    q = random_q(np.random.default_rng(4))
    M, Cqd, Dqd, g = joint_space_terms(P, JointState(q, np.zeros(10)))
    assert_allclose(Cqd, 0.0, atol=1e-12)
    assert_allclose(Dqd, 0.0, atol=1e-12)
    assert_allclose(M, M.T, atol=1e-12)
    assert np.linalg.eigvalsh(M)[0] > 0


def test_neutral_buoyancy_has_no_restoring_term():
    q = random_q(np.random.default_rng(5))
    g = joint_space_terms(neutral_undamped(P), JointState(q, np.zeros(10)))[3]
    assert_allclose(g, 0.0, atol=1e-12)


@given(seeds)
def test_passivity_skew_symmetry(seed):
    # oracle: Mdot from central differences of M along qdot
    rng = np.random.default_rng(seed)
    q, qd = random_q(rng), rng.normal(size=10)
    Pn = neutral_undamped(P)
    h = 1e-6
    Mp = joint_space_terms(Pn, JointState(q + h * qd, qd))[0]
    Mm = joint_space_terms(Pn, JointState(q - h * qd, qd))[0]
    Mdot = (Mp - Mm) / (2 * h)
    M, Cqd, _, _ = joint_space_terms(Pn, JointState(q, qd))
    # both sides carry central-difference error of order eps/h relative to |M| |qd|^2
    scale = np.linalg.norm(M, 2) * (qd @ qd)
    assert abs(qd @ Mdot @ qd - 2 * qd @ Cqd) <= 1e-7 * scale


@given(seeds)
def test_task_space_inertia_is_spd_and_power_balances(seed):
    rng = np.random.default_rng(seed)
    q, qd = random_q(rng, 1.0), rng.normal(size=10)
    st_ = JointState(q, qd)
    Lam, Cv, Dv, gi = task_space_terms(P, st_)
    assert_allclose(Lam, Lam.T, atol=1e-10)
    assert np.linalg.eigvalsh(Lam)[0] > 0
    u = rng.normal(size=6)
    J = geometric_jacobian(P, q)
    assert abs(qd @ (J.T @ u) - (J @ qd) @ u) <= 1e-8 * (1 + abs((J @ qd) @ u))


def test_task_space_static_neutral_forces_vanish():
    q = random_q(np.random.default_rng(6), 1.0)
    _, Cv, Dv, gi = task_space_terms(neutral_undamped(P), JointState(q, np.zeros(10)))
    for a in (Cv, Dv, gi):
        assert_allclose(a, 0.0, atol=1e-12)


def test_task_space_refuses_below_singularity_threshold():
    q = np.zeros(10)
    det = singularity_measure(P, q)
    with pytest.raises(NearSingular):
        task_space_terms(P, JointState(q, np.zeros(10)), eps_sing=2 * det)
    task_space_terms(P, JointState(q, np.zeros(10)), eps_sing=0.5 * det)


def test_baseline_torque_has_no_end_effector_effect():
    # the posture part lies in the dynamically consistent null space of J
    rng = np.random.default_rng(7)
    q, qd = random_q(rng, 1.0), rng.normal(size=10)
    st_ = JointState(q, qd)
    M, _, _, g = joint_space_terms(P, st_)
    J = geometric_jacobian(P, q)
    tau0 = baseline_torque(P, st_)
    assert np.abs(tau0 - g).max() > 1e-3
    assert_allclose(J @ np.linalg.solve(M, tau0 - g), 0.0, atol=1e-10)


def test_baseline_torque_is_restoring_compensation_at_home_rest():
    q = np.zeros(10)
    q[6:] = P.posture_home
    st_ = JointState(q, np.zeros(10))
    assert_allclose(baseline_torque(P, st_), joint_space_terms(P, st_)[3], atol=1e-12)


def test_kinetic_energy_quadratic():
    rng = np.random.default_rng(8)
    q, qd = random_q(rng), rng.normal(size=10)
    assert kinetic_energy(P, JointState(q, 2 * qd)) == pytest.approx(4 * kinetic_energy(P, JointState(q, qd)))
    assert kinetic_energy(P, JointState(q, np.zeros(10))) == 0.0


def test_end_effector_transform_is_homogeneous():
    T = end_effector_transform(P, random_q(np.random.default_rng(9)))
    assert_allclose(T[3], [0, 0, 0, 1])
    assert_allclose(T[:3, :3].T @ T[:3, :3], np.eye(3), atol=1e-12)
