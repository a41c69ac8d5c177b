import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from uvms_transport.checks import (identity_suite, neutral_undamped, random_team_state,
                                   vehicle_pose_for)
from uvms_transport.errors import IllConditioned
from uvms_transport.grasp import (GraspGeometry, LoadSharing, agent_flow, agent_object_state,
                                  coupled_terms, distributed_terms, end_effector_target,
                                  grasp_matrix, object_coupling_jacobian,
                                  reconstruct_object_state, right_pseudo_inverse)
from uvms_transport.object_model import (ObjectParams, ObjectState, default_object_params,
                                         object_terms)
from uvms_transport.spatial import Twist
from uvms_transport.uvms_model import JointState, default_uvms_params, task_space_terms

seeds = st.integers(0, 2 ** 32 - 1)


def one_grasp(l, alpha=(0.0, 0.0, 0.0)):
    return GraspGeometry([l], [alpha])


def test_target_without_offset_is_object_pose():
    x = np.array([1.0, 2.0, 3.0, 0.1, -0.2, 0.3])
    assert_allclose(end_effector_target(x, one_grasp([0, 0, 0]), 0).as_vector(), x)


def test_target_shift_at_identity_attitude():
    t = end_effector_target(np.zeros(6), one_grasp([1, 0, 0]), 0)
    assert_allclose(t.position, [1, 0, 0], atol=1e-15)


def test_target_shift_follows_yaw():
    t = end_effector_target([0, 0, 0, 0, 0, np.pi / 2], one_grasp([1, 0, 0]), 0)
    assert_allclose(t.position, [0, 1, 0], atol=1e-15)


def test_coupling_without_offset_is_identity():
    JiO, JOi = object_coupling_jacobian(one_grasp([0, 0, 0]), 0)
    assert_allclose(JiO, np.eye(6))
    assert_allclose(JOi, np.eye(6))


def test_coupling_follows_rigid_body_kinematics():
    # grasp 1 m ahead of the centre, end effector spinning about z without
    # translating: the centre, lying behind it, moves in -y
    JiO, _ = object_coupling_jacobian(one_grasp([1, 0, 0]), 0)
    assert_allclose(JiO @ [0, 0, 0, 0, 0, 1], [0, -1, 0, 0, 0, 1])


@given(seeds)
def test_coupling_inverse_pair(seed):
    rng = np.random.default_rng(seed)
    g = one_grasp(rng.normal(size=3))
    JiO, JOi = object_coupling_jacobian(g, 0, rng.uniform(-1, 1, 3))
    assert np.abs(JiO @ JOi - np.eye(6)).max() <= 1e-15


def test_grasp_matrix_shape_and_trivial_case():
    G = grasp_matrix(GraspGeometry(np.zeros((2, 3)), np.zeros((2, 3))), np.zeros(3))
    assert G.shape == (12, 6)
    assert_allclose(G, np.vstack([np.eye(6), np.eye(6)]))


@given(seeds)
def test_grasp_matrix_full_column_rank(seed):
    rng = np.random.default_rng(seed)
    g = GraspGeometry(rng.normal(size=(3, 3)), np.zeros((3, 3)))
    assert np.linalg.svd(grasp_matrix(g, rng.uniform(-1, 1, 3)), compute_uv=False)[-1] > 0


@given(seeds)
def test_reconstruction_inverts_target(seed):
    rng = np.random.default_rng(seed)
    g = GraspGeometry(rng.normal(size=(1, 3)), rng.uniform(-0.4, 0.4, (1, 3)))
    x = np.concatenate([rng.normal(size=3), rng.uniform(-0.6, 0.6, 3)])
    s = reconstruct_object_state(end_effector_target(x, g, 0), Twist(), g, 0)
    assert_allclose(s.pose.as_vector(), x, atol=1e-12)
    assert_allclose(s.twist.as_vector(), np.zeros(6))


def test_load_sharing_validation():
    assert LoadSharing([0.5, 0.5])[1] == 0.5
    for bad in ([0.6, 0.5], [1.0, 0.0], [-0.2, 1.2]):
        with pytest.raises(ValueError):
            LoadSharing(bad)


def test_separation_warning():
    g = GraspGeometry([[0, 0.6, 0], [0, -0.6, 0]], np.zeros((2, 3)), agent_radius=1.0)
    assert g.separation_diagnostics() == [(0, 1, pytest.approx(1.2))]
    with pytest.warns(UserWarning, match="apart"):
        g.warn_separation()


def test_single_agent_coupling_reduces_to_task_space(params, obj_params):
    rng = np.random.default_rng(0)
    g = one_grasp([0, 0, 0])
    _, _, obj, states = random_team_state(rng, params, obj_params, n_agents=1)
    obj_state = agent_object_state(params, states[0], g, 0)
    coupled = coupled_terms([params], states, obj_params, obj_state, g)
    own = object_terms(obj_params, obj_state)
    task = task_space_terms(params, states[0])
    for a, b, c in zip(coupled, own, task):
        assert_allclose(a - b, c, atol=1e-9)


def test_static_neutral_team_has_no_force_terms(params, obj_params, pair_geometry):
    P = neutral_undamped(params)
    O = ObjectParams(obj_params.mass_matrix, np.zeros((6, 6)), np.zeros(6), 0.0)
    rng = np.random.default_rng(1)
    _, _, obj, states = random_team_state(rng, P, O)
    x = obj.pose.as_vector()
    still = []
    for i in range(2):
        ee = end_effector_target(x, pair_geometry, i)
        T = np.eye(4)
        T[:3, :3], T[:3, 3] = ee.rotation, ee.position
        still.append(JointState(vehicle_pose_for(P, T, P.posture_home), np.zeros(10)))
    M, Cv, Dv, g = coupled_terms([P, P], still, O, ObjectState.from_vectors(x), pair_geometry)
    for a in (Cv, Dv, g):
        assert_allclose(a, 0.0, atol=1e-10)


@given(seeds)
def test_coupled_inertia_spd(seed):
    P, O = default_uvms_params(), default_object_params()
    geom, _, obj, states = random_team_state(np.random.default_rng(seed), P, O)
    M = coupled_terms([P, P], states, O, obj, geom)[0]
    assert np.linalg.eigvalsh(M)[0] > 0


def test_zero_share_leaves_only_agent_terms(params, obj_params):
    geom, _, obj, states = random_team_state(np.random.default_rng(2), params, obj_params)
    Mt, Ct, Dt, gt = distributed_terms(params, states[0], obj_params, geom, 0, 0.0, obj_state=obj)
    _, JOi = object_coupling_jacobian(geom, 0, obj.pose.euler)
    Lam, Ci, Di, gi = task_space_terms(params, states[0])
    assert_allclose(Dt, JOi.T @ Di, atol=1e-12)
    assert_allclose(gt, JOi.T @ gi, atol=1e-12)


def test_equal_shares_split_restoring_wrench(params, obj_params, pair_geometry):
    x = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.3])
    shares = []
    for i in range(2):
        ee = end_effector_target(x, pair_geometry, i)
        T = np.eye(4)
        T[:3, :3], T[:3, 3] = ee.rotation, ee.position
        st_ = JointState(vehicle_pose_for(params, T, params.posture_home), np.zeros(10))
        shares.append(distributed_terms(params, st_, obj_params, pair_geometry, i, 0.5,
                                        obj_state=ObjectState.from_vectors(x), compensated=True)[3])
    gO = object_terms(obj_params, ObjectState.from_vectors(x))[3]
    assert_allclose(shares[0], shares[1], atol=1e-14)
    assert_allclose(shares[0] + shares[1], gO, atol=1e-14)


def test_decomposition_identity_sampled():
    r = identity_suite(n_states=40, seed=11)
    assert r.passed, r.line()


def _static_agent(params, geom, rng):
    x = np.concatenate([rng.normal(size=3), rng.uniform(-0.3, 0.3, 3)])
    ee = end_effector_target(x, geom, 0)
    T = np.eye(4)
    T[:3, :3], T[:3, 3] = ee.rotation, ee.position
    return JointState(vehicle_pose_for(params, T, params.posture_home + 0.2 * rng.normal(size=4)),
                      np.zeros(10))


def test_flow_force_balance(params, obj_params, pair_geometry):
    rng = np.random.default_rng(3)
    st_ = _static_agent(params, pair_geometry, rng)
    Mt, Ct, Dt, gt = distributed_terms(params, st_, obj_params, pair_geometry, 0, 0.5)
    eta = agent_object_state(params, st_, pair_geometry, 0).pose.euler
    _, JOi = object_coupling_jacobian(pair_geometry, 0, eta)
    u = np.linalg.solve(JOi.T, Ct + Dt + gt)
    qdd = agent_flow(params, st_, u, obj_params, pair_geometry, 0, 0.5)[10:]
    assert np.linalg.norm(Mt @ qdd) <= 1e-9


@given(seeds)
def test_pseudo_inverse_is_right_inverse(seed):
    P, O = default_uvms_params(), default_object_params()
    geom, c, obj, states = random_team_state(np.random.default_rng(seed), P, O)
    Mt = distributed_terms(P, states[0], O, geom, 0, c[0], obj_state=obj)[0]
    assert np.abs(Mt @ right_pseudo_inverse(Mt) - np.eye(6)).max() <= 1e-9


def test_pseudo_inverse_refuses_ill_conditioning():
    A = np.zeros((6, 10))
    A[:, :6] = np.diag([1, 1, 1, 1, 1, 1e-8])
    with pytest.raises(IllConditioned):
        right_pseudo_inverse(A)


def test_flow_is_linear_in_residual_wrench(params, obj_params, pair_geometry):
    rng = np.random.default_rng(4)
    st_ = _static_agent(params, pair_geometry, rng)
    st_ = JointState(st_.q, 0.05 * rng.normal(size=10))
    Mt, Ct, Dt, gt = distributed_terms(params, st_, obj_params, pair_geometry, 0, 0.5)
    eta = agent_object_state(params, st_, pair_geometry, 0).pose.euler
    _, JOi = object_coupling_jacobian(pair_geometry, 0, eta)
    u0 = np.linalg.solve(JOi.T, Ct + Dt + gt)
    d = rng.normal(size=6)
    a1 = agent_flow(params, st_, u0 + d, obj_params, pair_geometry, 0, 0.5)[10:]
    a2 = agent_flow(params, st_, u0 + 2 * d, obj_params, pair_geometry, 0, 0.5)[10:]
    assert_allclose(a2, 2 * a1, rtol=1e-8, atol=1e-10)
