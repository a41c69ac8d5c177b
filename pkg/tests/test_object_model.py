import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from uvms_transport.errors import RepresentationSingularity
from uvms_transport.object_model import (ObjectParams, ObjectState, default_object_params,
                                         object_pose_rate, object_terms, uniform_bar)
from uvms_transport.spatial import euler_rate_jacobian

P = default_object_params()
seeds = st.integers(0, 2 ** 32 - 1)


def random_state(rng):
    x = np.concatenate([rng.normal(size=3), rng.uniform(-1.2, 1.2, size=3)])
    return ObjectState.from_vectors(x, rng.normal(size=6))


def neutral(p):
    return ObjectParams(p.mass_matrix, p.linear_damping, p.quadratic_damping, 0.0, np.zeros(3),
                        p.bounding_radius)


def test_zero_twist_has_no_velocity_forces():
    s = random_state(np.random.default_rng(0))
    s.twist = s.twist.__class__()
    _, Cv, Dv, _ = object_terms(P, s)
    assert_allclose(Cv, 0.0, atol=1e-14)
    assert_allclose(Dv, 0.0, atol=1e-14)


def test_neutral_buoyancy_without_offset_has_no_restoring_wrench():
    g = object_terms(neutral(P), random_state(np.random.default_rng(1)))[3]
    assert_allclose(g, 0.0, atol=1e-14)


def test_level_object_restoring_force_is_net_weight_downwards():
    s = ObjectState.from_vectors(np.zeros(6))
    g = object_terms(P, s)[3]
    assert_allclose(g, [0, 0, P.net_restoring, 0, 0, 0], atol=1e-12)


@given(seeds)
def test_mass_matrix_is_spd(seed):
    M = object_terms(P, random_state(np.random.default_rng(seed)))[0]
    assert_allclose(M, M.T, atol=1e-12)
    assert np.linalg.eigvalsh(M)[0] > 0


@given(seeds)
def test_passivity_skew_symmetry(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng)
    x, v = s.pose.as_vector(), s.twist.as_vector()
    # Mdot along the motion: only the attitude moves the inertial mass matrix
    h = 1e-6
    xdot = object_pose_rate(s)
    Mp = object_terms(P, ObjectState.from_vectors(x + h * xdot, v))[0]
    Mm = object_terms(P, ObjectState.from_vectors(x - h * xdot, v))[0]
    Mdot = (Mp - Mm) / (2 * h)
    Cv = object_terms(P, s)[1]
    scale = np.linalg.norm(Mp, 2) * (v @ v)
    assert abs(v @ Mdot @ v - 2 * v @ Cv) <= 1e-8 * scale


def test_pose_rate_is_identity_at_zero_attitude():
    s = ObjectState.from_vectors(np.zeros(6), [1, 0, 0, 0, 0, 0])
    assert_allclose(object_pose_rate(s), [1, 0, 0, 0, 0, 0])
    assert_allclose(object_pose_rate(ObjectState.from_vectors(np.zeros(6))), np.zeros(6))


@given(seeds)
def test_pose_rate_round_trip(seed):
    s = random_state(np.random.default_rng(seed))
    xdot = object_pose_rate(s)
    assert_allclose(euler_rate_jacobian(s.pose.euler) @ xdot, s.twist.as_vector(), atol=1e-10)


def test_pose_rate_refuses_gimbal_lock():
    s = ObjectState.from_vectors([0, 0, 0, 0, np.pi / 2 - 0.01, 0], np.ones(6))
    with pytest.raises(RepresentationSingularity):
        object_pose_rate(s)


def test_invalid_mass_matrix_rejected():
    with pytest.raises(ValueError):
        ObjectParams(-np.eye(6), np.eye(6), np.zeros(6))


def test_bar_inertia_has_no_added_mass_along_axis():
    M = uniform_bar(2.0, 1.0, 0.05, axis=1)
    assert M[1, 1] == 2.0
    assert M[0, 0] > 2.0 and M[2, 2] == M[0, 0]
