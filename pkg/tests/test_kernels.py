"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from uvms_transport import _kernels
from uvms_transport.grasp import GraspGeometry
from uvms_transport.object_model import default_object_params
from uvms_transport.uvms_model import default_uvms_params

cy = _kernels.compiled_backend
py = _kernels.python_backend
pytestmark = pytest.mark.skipif(cy is None, reason="compiled kernels not built")

P = default_uvms_params()
O = default_object_params()


def states(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        q = np.concatenate([rng.normal(size=3), rng.uniform(-0.6, 0.6, 3), rng.uniform(-1, 1, 4)])
        yield q, 0.2 * rng.normal(size=10), rng.normal(size=6)


def test_backend_selection(monkeypatch):
    assert _kernels.select("python") is py
    assert _kernels.select("cython") is cy
    monkeypatch.setenv("UVMS_TRANSPORT_BACKEND", "python")
    assert _kernels.select() is py


def close(x, y, tol):
    x, y = np.asarray(x), np.asarray(y)
    return np.abs(x - y).max() <= tol * (1.0 + np.abs(y).max())


def test_joint_terms_agree():
    # Jdot and the velocity product come from a central difference of the
    # kinematics, whose rounding differs between backends at the 1e-9 level
    tols = [1e-13, 1e-8, 1e-13, 1e-13, 1e-13, 1e-8, 1e-13, 1e-13, 1e-11]
    for q, qd, _ in states(20, 0):
        a = cy.joint_terms(P.kernel(cy), q, qd)
        b = py.joint_terms(P.kernel(py), q, qd)
        for x, y, tol in zip(a, b, tols):
            assert close(x, y, tol)


def test_object_terms_agree():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, v = np.r_[rng.normal(size=3), rng.uniform(-1, 1, 3)], rng.normal(size=6)
        for a, b in zip(cy.object_terms(O.kernel(cy), x, v), py.object_terms(O.kernel(py), x, v)):
            assert_allclose(a, b, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("compensated", [True, False])
def test_flow_agrees(compensated):
    g = GraspGeometry([[0.0, 0.6, 0.0]], [[0.0, 0.0, 0.1]])
    for q, qd, u in states(20, 2):
        out = []
        for be in (cy, py):
            kg = be.KernelGrasp(g.offsets[0], g.alphas[0], 0.5, compensated)
            out.append(be.flow(P.kernel(be), O.kernel(be), kg, q, qd, u))
        assert out[0][1] == out[1][1]
        assert close(out[0][0], out[1][0], 1e-7)


def test_rollout_agrees():
    g = GraspGeometry([[0.0, -0.6, 0.0]], [[0.0, 0.0, 0.0]])
    rng = np.random.default_rng(3)
    for q, qd, _ in states(5, 4):
        U = rng.normal(size=(5, 6))
        res = []
        for be in (cy, py):
            kg = be.KernelGrasp(g.offsets[0], g.alphas[0], 0.5, True)
            res.append(be.rollout(P.kernel(be), O.kernel(be), kg, q, qd, U, 0.12, 2))
        for x, y in zip(res[0][:6], res[1][:6]):
            assert close(x, y, 1e-7)
        assert res[0][6:] == res[1][6:]
