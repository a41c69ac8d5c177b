"""Pure-numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is unavailable or when ``UVMS_TRANSPORT_BACKEND=python``.
"""
import numpy as np

NAME = "python"

STATUS_OK = 0
STATUS_NEAR_SINGULAR = 1
STATUS_PITCH = 2
STATUS_ILL_CONDITIONED = 3


class KernelModel:
    def __init__(self, dh, base_T, tool_T, body_frame, body_com, body_inertia,
                 body_wmb, dlin, dquad, armature, home, kp, kd, delta_j=1e-6):
        self.dh = np.ascontiguousarray(dh, dtype=float).reshape(-1, 4)
        self.na = self.dh.shape[0]
        self.n = 6 + self.na
        self.base_T = np.array(base_T, dtype=float)
        self.tool_T = np.array(tool_T, dtype=float)
        self.body_frame = np.asarray(body_frame, dtype=np.intc)
        self.nb = len(self.body_frame)
        self.body_com = np.asarray(body_com, dtype=float).reshape(self.nb, 3)
        self.body_inertia = np.asarray(body_inertia, dtype=float).reshape(self.nb, 6, 6)
        self.body_wmb = np.asarray(body_wmb, dtype=float).reshape(self.nb)
        self.dlin = np.asarray(dlin, dtype=float).reshape(self.n)
        self.dquad = np.asarray(dquad, dtype=float).reshape(self.n)
        self.armature = np.asarray(armature, dtype=float).reshape(self.na)
        self.home = np.asarray(home, dtype=float).reshape(self.na)
        self.kp = np.asarray(kp, dtype=float).reshape(self.na)
        self.kd = np.asarray(kd, dtype=float).reshape(self.na)
        self.delta_j = float(delta_j)


class KernelObject:
    def __init__(self, inertia, dlin, dquad, wnet, roff):
        self.inertia = np.asarray(inertia, dtype=float).reshape(6, 6)
        self.dlin = np.asarray(dlin, dtype=float).reshape(6, 6)
        self.dquad = np.asarray(dquad, dtype=float).reshape(6)
        self.wnet = float(wnet)
        self.roff = np.asarray(roff, dtype=float).reshape(3)


class KernelGrasp:
    def __init__(self, l, alpha, c, compensated=True):
        self.l = np.asarray(l, dtype=float).reshape(3)
        self.alpha = np.asarray(alpha, dtype=float).reshape(3)
        self.c = float(c)
        self.compensated = bool(compensated)


def _rot(e):
    cf, sf = np.cos(e[0]), np.sin(e[0])
    ct, st = np.cos(e[1]), np.sin(e[1])
    cp, sp = np.cos(e[2]), np.sin(e[2])
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def _rate(e):
    ct, st = np.cos(e[1]), np.sin(e[1])
    cp, sp = np.cos(e[2]), np.sin(e[2])
    return np.array([[cp * ct, -sp, 0.0], [sp * ct, cp, 0.0], [-st, 0.0, 1.0]])


def _euler(R):
    theta = np.arctan2(-R[2, 0], np.hypot(R[0, 0], R[1, 0]))
    return np.array([np.arctan2(R[2, 1], R[2, 2]), theta, np.arctan2(R[1, 0], R[0, 0])])


def _wrap(a):
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _dh(row, qj):
    a, alpha, d, off = row
    th = qj + off
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _chain(m, q):
    """Frames, end-effector Jacobian, body Jacobians and COM height gradients."""
    n, na = m.n, m.na
    TB = np.eye(4)
    TB[:3, :3] = _rot(q[3:6])
    TB[:3, 3] = q[:3]
    E = _rate(q[3:6])
    frames = [TB @ m.base_T]
    for j in range(na):
        frames.append(frames[-1] @ _dh(m.dh[j], q[6 + j]))
    pB = TB[:3, 3]

    def point_jac(p, upto):
        Jl = np.zeros((3, n))
        Ja = np.zeros((3, n))
        Jl[:, :3] = np.eye(3)
        Jl[:, 3:6] = -_skew(p - pB) @ E
        Ja[:, 3:6] = E
        for j in range(upto):
            z = frames[j][:3, 2]
            Jl[:, 6 + j] = np.cross(z, p - frames[j][:3, 3])
            Ja[:, 6 + j] = z
        return Jl, Ja

    Tee = frames[-1] @ m.tool_T
    Jl, Ja = point_jac(Tee[:3, 3], na)
    J = np.vstack([Jl, Ja])

    Jb = np.zeros((m.nb, 6, n))
    Jz = np.zeros((m.nb, n))
    for b in range(m.nb):
        f = m.body_frame[b]
        T = TB if f == 0 else frames[f]
        R = T[:3, :3]
        pc = T[:3, 3] + R @ m.body_com[b]
        bl, ba = point_jac(pc, f)
        Jb[b, :3] = R.T @ bl
        Jb[b, 3:] = R.T @ ba
        Jz[b] = bl[2]
    return Tee[:3, 3].copy(), Tee[:3, :3].copy(), J, Jb, Jz


def ee_kinematics(m, q):
    q = np.asarray(q, dtype=float)
    p, R, J, _, _ = _chain(m, q)
    return p, R, J


def _crf_times(V, P):
    nu, w = V[:3], V[3:]
    p, h = P[:3], P[3:]
    return np.concatenate([np.cross(w, p), np.cross(w, h) + np.cross(nu, p)])


def joint_terms(m, q, qd):
    """M, C qd, D qd, g, J, Jdot, p_ee, R_ee and the posture/gravity torque tau0."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    d = m.delta_j
    p, R, J, Jb, Jz = _chain(m, q)
    _, _, Jp, Jbp, _ = _chain(m, q + d * qd)
    _, _, Jm, Jbm, _ = _chain(m, q - d * qd)
    Jdot = (Jp - Jm) / (2.0 * d)
    n, na = m.n, m.na
    M = np.zeros((n, n))
    Cqd = np.zeros(n)
    for b in range(m.nb):
        Mb = m.body_inertia[b]
        V = Jb[b] @ qd
        a = (Jbp[b] @ qd - Jbm[b] @ qd) / (2.0 * d)
        M += Jb[b].T @ Mb @ Jb[b]
        Cqd += Jb[b].T @ (Mb @ a + _crf_times(V, Mb @ V))
    M[6:, 6:] += np.diag(m.armature)
    M = 0.5 * (M + M.T)
    Dqd = (m.dlin + m.dquad * np.abs(qd)) * qd
    g = m.body_wmb @ Jz
    Y = np.linalg.solve(M, J.T)
    Lam = np.linalg.inv(J @ Y)
    tau_p = np.zeros(n)
    tau_p[6:] = m.kp * (m.home - q[6:]) - m.kd * qd[6:]
    tau0 = g + tau_p - J.T @ (Lam @ (Y.T @ tau_p))
    return M, Cqd, Dqd, g, J, Jdot, p, R, tau0


def object_terms(o, x, v):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    R = _rot(x[3:6])
    T = np.zeros((6, 6))
    T[:3, :3] = R
    T[3:, 3:] = R
    MO = T @ o.inertia @ T.T
    MO = 0.5 * (MO + MO.T)
    w = v[3:]
    P = MO @ v
    Cv = _crf_times(v, P) - MO @ np.concatenate([np.cross(w, v[:3]), np.zeros(3)])
    Dv = (o.dlin + np.diag(o.dquad * np.abs(v))) @ v
    fz = np.array([0.0, 0.0, o.wnet])
    g = np.concatenate([fz, np.cross(R @ o.roff, fz)])
    return MO, Cv, Dv, g


def _det_jjt(J):
    return float(np.linalg.det(J @ J.T))


def flow(m, o, gr, q, qd, u, eps_sing=1e-6, eps_pitch=0.05, cond_max=1e12):
    """Distributed-model joint acceleration. Returns (qdd, status, info)."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    u = np.asarray(u, dtype=float)
    try:
        M, Cqd, Dqd, g, J, Jdot, p, R, tau0 = joint_terms(m, q, qd)
    except np.linalg.LinAlgError:
        return np.zeros(m.n), STATUS_NEAR_SINGULAR, {"det": 0.0, "tau": np.zeros(m.n)}
    det = _det_jjt(J)
    info = {"det": det, "tau": J.T @ u + tau0}
    if not det > eps_sing:
        return np.zeros(m.n), STATUS_NEAR_SINGULAR, info
    eta = _wrap(_euler(R) - gr.alpha)
    if abs(eta[1]) >= np.pi / 2 - eps_pitch:
        return np.zeros(m.n), STATUS_PITCH, info
    RO = _rot(eta)
    r = RO @ gr.l
    xO = np.concatenate([p - r, eta])
    vi = J @ qd
    JiO = np.eye(6)
    JiO[:3, 3:] = _skew(r)
    JOi = np.eye(6)
    JOi[:3, 3:] = -_skew(r)
    vO = JiO @ vi
    rdot = np.cross(vi[3:], r)
    JiOdot_v = np.concatenate([np.cross(rdot, vi[3:]), np.zeros(3)])
    Y = np.linalg.solve(M, J.T)
    Lam = np.linalg.inv(J @ Y)
    Jdqd = Jdot @ qd
    Ci_v = Lam @ (Y.T @ Cqd - Jdqd)
    Di_v = Lam @ (Y.T @ Dqd)
    gi = Lam @ (Y.T @ g)
    MO, COv, DOv, gO = object_terms(o, xO, vO)
    c = gr.c
    Mt = (c * MO @ JiO + JOi.T @ Lam) @ J
    Ct = c * (MO @ (JiO @ Jdqd) + MO @ JiOdot_v + COv) + JOi.T @ (Lam @ Jdqd + Ci_v)
    Dt = c * DOv + JOi.T @ Di_v
    gt = c * gO if gr.compensated else c * gO + JOi.T @ gi
    MMt = Mt @ Mt.T
    try:
        L = np.linalg.cholesky(MMt)
    except np.linalg.LinAlgError:
        return np.zeros(m.n), STATUS_ILL_CONDITIONED, info
    # cheap condition estimate from the Cholesky diagonal, shared with the compiled kernel
    dg = np.diag(L)
    if (dg.max() / dg.min()) ** 2 > cond_max:
        return np.zeros(m.n), STATUS_ILL_CONDITIONED, info
    rhs = JOi.T @ u - Ct - Dt - gt
    qdd = Mt.T @ np.linalg.solve(MMt, rhs)
    info.update(xO=xO, vO=vO)
    return qdd, STATUS_OK, info


def object_output(m, gr, q, qd):
    """Object pose/twist seen from one agent, plus det(J J^T)."""
    p, R, J = ee_kinematics(m, q)
    eta = _wrap(_euler(R) - gr.alpha)
    r = _rot(eta) @ gr.l
    vi = J @ qd
    vO = vi.copy()
    vO[:3] += np.cross(r, vi[3:])
    return np.concatenate([p - r, eta]), vO, _det_jjt(J)


def rollout(m, o, gr, q0, qd0, U, h, substeps, eps_sing=1e-6, eps_pitch=0.05,
            cond_max=1e12):
    """RK4 rollout of the distributed model under piecewise-constant inputs.

    Returns (Q, QD, XO, VO, DET, TAU, status, fail_step); rows past a failure are
    copies of the last valid row.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    K = U.shape[0] if U.size else 0
    n = m.n
    Q = np.zeros((K + 1, n))
    QD = np.zeros((K + 1, n))
    XO = np.zeros((K + 1, 6))
    VO = np.zeros((K + 1, 6))
    DET = np.zeros(K + 1)
    TAU = np.zeros((K, n))
    q = np.array(q0, dtype=float)
    qd = np.array(qd0, dtype=float)
    Q[0], QD[0] = q, qd
    dt = h / substeps
    status, fail = STATUS_OK, -1

    def f(qq, vv, u):
        return flow(m, o, gr, qq, vv, u, eps_sing, eps_pitch, cond_max)

    for k in range(K):
        u = U[k]
        for s in range(substeps):
            a1, st, info = f(q, qd, u)
            if s == 0:
                XO[k] = info.get("xO", XO[k - 1] if k else 0.0)
                VO[k] = info.get("vO", VO[k - 1] if k else 0.0)
                DET[k] = info["det"]
                TAU[k] = info["tau"]
            if st:
                status, fail = st, k
                break
            k1q, k1v = qd, a1
            a2, st, _ = f(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v, u)
            if st:
                status, fail = st, k
                break
            k2q, k2v = qd + 0.5 * dt * k1v, a2
            a3, st, _ = f(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v, u)
            if st:
                status, fail = st, k
                break
            k3q, k3v = qd + 0.5 * dt * k2v, a3
            a4, st, _ = f(q + dt * k3q, qd + dt * k3v, u)
            if st:
                status, fail = st, k
                break
            k4q, k4v = qd + dt * k3v, a4
            q = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            qd = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if status:
            for j in range(k, K + 1):
                Q[j], QD[j] = Q[k], QD[k]
                if j > k:
                    XO[j], VO[j], DET[j] = XO[k], VO[k], DET[k]
                if j < K and j > k:
                    TAU[j] = TAU[k]
            return Q, QD, XO, VO, DET, TAU, status, fail
        Q[k + 1], QD[k + 1] = q, qd
    XO[K], VO[K], DET[K] = object_output(m, gr, q, qd)
    return Q, QD, XO, VO, DET, TAU, status, fail
