# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: chain kinematics, joint-space terms, distributed flow, RK4 rollout.

Numerically equivalent to ``_pykernels``; fixed-size C arrays bound the model
to MAXA arm joints and MAXB rigid bodies.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport sin, cos, sqrt, atan2, fabs, fmod, M_PI

cnp.import_array()

NAME = "cython"

cdef enum:
    MAXA = 8
    MAXN = 14
    MAXB = 10

cdef enum:
    ST_OK = 0
    ST_NEAR_SINGULAR = 1
    ST_PITCH = 2
    ST_ILL_CONDITIONED = 3

STATUS_OK = ST_OK
STATUS_NEAR_SINGULAR = ST_NEAR_SINGULAR
STATUS_PITCH = ST_PITCH
STATUS_ILL_CONDITIONED = ST_ILL_CONDITIONED


cdef struct Model:
    int na
    int n
    int nb
    double dh[MAXA][4]
    double baseR[3][3]
    double basep[3]
    double toolR[3][3]
    double toolp[3]
    int body_frame[MAXB]
    double body_com[MAXB][3]
    double body_M[MAXB][6][6]
    double body_wmb[MAXB]
    double dlin[MAXN]
    double dquad[MAXN]
    double armature[MAXA]
    double home[MAXA]
    double kp[MAXA]
    double kd[MAXA]
    double delta


cdef struct Obj:
    double M[6][6]
    double dlin[6][6]
    double dquad[6]
    double wnet
    double roff[3]


cdef struct Grasp:
    double l[3]
    double alpha[3]
    double c
    int compensated


cdef struct Chain:
    double p[3]
    double R[3][3]
    double J[6][MAXN]
    double Jb[MAXB][6][MAXN]
    double Jz[MAXB][MAXN]


cdef struct Terms:
    double M[MAXN][MAXN]
    double L[MAXN][MAXN]
    double Cqd[MAXN]
    double Dqd[MAXN]
    double g[MAXN]
    double J[6][MAXN]
    double Jdot[6][MAXN]
    double p[3]
    double R[3][3]
    double Y[MAXN][6]
    double Lam[6][6]
    double tau0[MAXN]
    int ok


cdef struct FlowInfo:
    double det
    double tau[MAXN]
    double xO[6]
    double vO[6]


# ---------------------------------------------------------------- small helpers

cdef inline void rot(const double* e, double R[3][3]) noexcept nogil:
    cdef double cf = cos(e[0]), sf = sin(e[0])
    cdef double ct = cos(e[1]), st = sin(e[1])
    cdef double cp = cos(e[2]), sp = sin(e[2])
    R[0][0] = cp * ct
    R[0][1] = cp * st * sf - sp * cf
    R[0][2] = cp * st * cf + sp * sf
    R[1][0] = sp * ct
    R[1][1] = sp * st * sf + cp * cf
    R[1][2] = sp * st * cf - cp * sf
    R[2][0] = -st
    R[2][1] = ct * sf
    R[2][2] = ct * cf


cdef inline void rate(const double* e, double E[3][3]) noexcept nogil:
    cdef double ct = cos(e[1]), st = sin(e[1])
    cdef double cp = cos(e[2]), sp = sin(e[2])
    E[0][0] = cp * ct
    E[0][1] = -sp
    E[0][2] = 0.0
    E[1][0] = sp * ct
    E[1][1] = cp
    E[1][2] = 0.0
    E[2][0] = -st
    E[2][1] = 0.0
    E[2][2] = 1.0


cdef inline double wrap(double a) noexcept nogil:
    cdef double w = fmod(a + M_PI, 2.0 * M_PI)
    if w < 0:
        w += 2.0 * M_PI
    w -= M_PI
    if w == -M_PI:
        w = M_PI
    return w


cdef inline void euler_of(double R[3][3], double* e) noexcept nogil:
    e[1] = atan2(-R[2][0], sqrt(R[0][0] * R[0][0] + R[1][0] * R[1][0]))
    e[0] = atan2(R[2][1], R[2][2])
    e[2] = atan2(R[1][0], R[0][0])


cdef inline void cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void matmul3(double A[3][3], double B[3][3], double C[3][3]) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[i][j] = A[i][0] * B[0][j] + A[i][1] * B[1][j] + A[i][2] * B[2][j]


cdef int chol(double* A, int n, int lda, double* L, int ldl) noexcept nogil:
    """Lower Cholesky factor; returns 1 if A is not positive definite."""
    cdef int i, j, k
    cdef double s
    for i in range(n):
        for j in range(i + 1):
            s = A[i * lda + j]
            for k in range(j):
                s -= L[i * ldl + k] * L[j * ldl + k]
            if i == j:
                if s <= 0.0:
                    return 1
                L[i * ldl + i] = sqrt(s)
            else:
                L[i * ldl + j] = s / L[j * ldl + j]
        for j in range(i + 1, n):
            L[i * ldl + j] = 0.0
    return 0


cdef void chol_solve(double* L, int n, int ldl, double* b) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i * ldl + k] * b[k]
        b[i] = s / L[i * ldl + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k * ldl + i] * b[k]
        b[i] = s / L[i * ldl + i]


# ---------------------------------------------------------------- kinematics

cdef void chain(Model* m, const double* q, Chain* c, bint bodies) noexcept nogil:
    cdef double RB[3][3]
    cdef double E[3][3]
    cdef double Rf[MAXA + 1][3][3]
    cdef double pf[MAXA + 1][3]
    cdef double tmp[3][3]
    cdef double Rj[3][3]
    cdef double pj[3]
    cdef double Rt[3][3]
    cdef double pe[3]
    cdef double pc[3]
    cdef double d[3]
    cdef double z[3]
    cdef double col[3]
    cdef double Jl[3][MAXN]
    cdef double Ja[3][MAXN]
    cdef int i, j, k, b, f, upto
    cdef int n = m.n, na = m.na
    cdef double th, ct, st, ca, sa, a, s

    rot(q + 3, RB)
    rate(q + 3, E)
    # arm base frame
    matmul3(RB, m.baseR, tmp)
    for i in range(3):
        for j in range(3):
            Rf[0][i][j] = tmp[i][j]
        pf[0][i] = q[i] + RB[i][0] * m.basep[0] + RB[i][1] * m.basep[1] + RB[i][2] * m.basep[2]
    for k in range(na):
        a = m.dh[k][0]
        th = q[6 + k] + m.dh[k][3]
        ct = cos(th)
        st = sin(th)
        ca = cos(m.dh[k][1])
        sa = sin(m.dh[k][1])
        Rj[0][0] = ct
        Rj[0][1] = -st * ca
        Rj[0][2] = st * sa
        Rj[1][0] = st
        Rj[1][1] = ct * ca
        Rj[1][2] = -ct * sa
        Rj[2][0] = 0.0
        Rj[2][1] = sa
        Rj[2][2] = ca
        pj[0] = a * ct
        pj[1] = a * st
        pj[2] = m.dh[k][2]
        matmul3(Rf[k], Rj, tmp)
        for i in range(3):
            for j in range(3):
                Rf[k + 1][i][j] = tmp[i][j]
            pf[k + 1][i] = pf[k][i] + Rf[k][i][0] * pj[0] + Rf[k][i][1] * pj[1] + Rf[k][i][2] * pj[2]
    # end effector
    matmul3(Rf[na], m.toolR, Rt)
    for i in range(3):
        pe[i] = pf[na][i] + Rf[na][i][0] * m.toolp[0] + Rf[na][i][1] * m.toolp[1] + Rf[na][i][2] * m.toolp[2]
        c.p[i] = pe[i]
        for j in range(3):
            c.R[i][j] = Rt[i][j]

    _point_jac(pe, na, q, RB, E, Rf, pf, n, Jl, Ja)
    for i in range(3):
        for j in range(n):
            c.J[i][j] = Jl[i][j]
            c.J[3 + i][j] = Ja[i][j]
    if not bodies:
        return
    for b in range(m.nb):
        f = m.body_frame[b]
        if f == 0:
            for i in range(3):
                for j in range(3):
                    tmp[i][j] = RB[i][j]
                pc[i] = q[i]
        else:
            for i in range(3):
                for j in range(3):
                    tmp[i][j] = Rf[f][i][j]
                pc[i] = pf[f][i]
        for i in range(3):
            d[i] = pc[i] + tmp[i][0] * m.body_com[b][0] + tmp[i][1] * m.body_com[b][1] + tmp[i][2] * m.body_com[b][2]
        _point_jac(d, f, q, RB, E, Rf, pf, n, Jl, Ja)
        for j in range(n):
            c.Jz[b][j] = Jl[2][j]
            for i in range(3):
                c.Jb[b][i][j] = tmp[0][i] * Jl[0][j] + tmp[1][i] * Jl[1][j] + tmp[2][i] * Jl[2][j]
                c.Jb[b][3 + i][j] = tmp[0][i] * Ja[0][j] + tmp[1][i] * Ja[1][j] + tmp[2][i] * Ja[2][j]


cdef void _point_jac(double* p, int upto, const double* q, double RB[3][3], double E[3][3],
                     double Rf[][3][3], double pf[][3], int n,
                     double Jl[3][MAXN], double Ja[3][MAXN]) noexcept nogil:
    cdef int i, j
    cdef double r[3]
    cdef double z[3]
    cdef double d[3]
    cdef double col[3]
    cdef double e[3]
    for i in range(3):
        for j in range(n):
            Jl[i][j] = 0.0
            Ja[i][j] = 0.0
        Jl[i][i] = 1.0
        r[i] = p[i] - q[i]
    for j in range(3):
        e[0] = E[0][j]
        e[1] = E[1][j]
        e[2] = E[2][j]
        cross(e, r, col)
        for i in range(3):
            Jl[i][3 + j] = col[i]
            Ja[i][3 + j] = e[i]
    for j in range(upto):
        for i in range(3):
            z[i] = Rf[j][i][2]
            d[i] = p[i] - pf[j][i]
        cross(z, d, col)
        for i in range(3):
            Jl[i][6 + j] = col[i]
            Ja[i][6 + j] = z[i]


cdef inline void crf_times(const double* V, const double* P, double* out) noexcept nogil:
    cdef double t[3]
    cross(V + 3, P, out)
    cross(V + 3, P + 3, out + 3)
    cross(V, P, t)
    out[3] += t[0]
    out[4] += t[1]
    out[5] += t[2]


cdef int joint_terms_c(Model* m, const double* q, const double* qd, Terms* T,
                       Chain* c0, Chain* cp, Chain* cm) noexcept nogil:
    cdef int n = m.n, na = m.na
    cdef int i, j, k, b
    cdef double qp[MAXN]
    cdef double qm[MAXN]
    cdef double V[6]
    cdef double Vp[6]
    cdef double Vm[6]
    cdef double acc[6]
    cdef double P[6]
    cdef double F[6]
    cdef double MJ[6][MAXN]
    cdef double JMJ[6][6]
    cdef double L6[6][6]
    cdef double tp[MAXN]
    cdef double w6[6]
    cdef double s
    cdef double dl = m.delta
    cdef double inv2d = 1.0 / (2.0 * dl)

    for i in range(n):
        qp[i] = q[i] + dl * qd[i]
        qm[i] = q[i] - dl * qd[i]
    chain(m, q, c0, True)
    chain(m, qp, cp, True)
    chain(m, qm, cm, True)
    for i in range(3):
        T.p[i] = c0.p[i]
        for j in range(3):
            T.R[i][j] = c0.R[i][j]
    for i in range(6):
        for j in range(n):
            T.J[i][j] = c0.J[i][j]
            T.Jdot[i][j] = (cp.J[i][j] - cm.J[i][j]) * inv2d
    for i in range(n):
        T.Cqd[i] = 0.0
        T.g[i] = 0.0
        for j in range(n):
            T.M[i][j] = 0.0
    for b in range(m.nb):
        for i in range(6):
            V[i] = 0.0
            Vp[i] = 0.0
            Vm[i] = 0.0
            for j in range(n):
                V[i] += c0.Jb[b][i][j] * qd[j]
                Vp[i] += cp.Jb[b][i][j] * qd[j]
                Vm[i] += cm.Jb[b][i][j] * qd[j]
            acc[i] = (Vp[i] - Vm[i]) * inv2d
        for i in range(6):
            P[i] = 0.0
            s = 0.0
            for k in range(6):
                P[i] += m.body_M[b][i][k] * V[k]
                s += m.body_M[b][i][k] * acc[k]
            F[i] = s
            for j in range(n):
                s = 0.0
                for k in range(6):
                    s += m.body_M[b][i][k] * c0.Jb[b][k][j]
                MJ[i][j] = s
        crf_times(V, P, w6)
        for i in range(6):
            F[i] += w6[i]
        for i in range(n):
            s = 0.0
            for k in range(6):
                s += c0.Jb[b][k][i] * F[k]
            T.Cqd[i] += s
            T.g[i] += m.body_wmb[b] * c0.Jz[b][i]
            for j in range(i, n):
                s = 0.0
                for k in range(6):
                    s += c0.Jb[b][k][i] * MJ[k][j]
                T.M[i][j] += s
    for i in range(n):
        for j in range(i):
            T.M[i][j] = T.M[j][i]
    for j in range(na):
        T.M[6 + j][6 + j] += m.armature[j]
    for i in range(n):
        T.Dqd[i] = (m.dlin[i] + m.dquad[i] * fabs(qd[i])) * qd[i]

    if chol(&T.M[0][0], n, MAXN, &T.L[0][0], MAXN):
        return 1
    # Y = M^-1 J^T
    for j in range(6):
        for i in range(n):
            tp[i] = T.J[j][i]
        chol_solve(&T.L[0][0], n, MAXN, tp)
        for i in range(n):
            T.Y[i][j] = tp[i]
    for i in range(6):
        for j in range(6):
            s = 0.0
            for k in range(n):
                s += T.J[i][k] * T.Y[k][j]
            JMJ[i][j] = s
    if chol(&JMJ[0][0], 6, 6, &L6[0][0], 6):
        return 1
    for j in range(6):
        for i in range(6):
            w6[i] = 1.0 if i == j else 0.0
        chol_solve(&L6[0][0], 6, 6, w6)
        for i in range(6):
            T.Lam[i][j] = w6[i]
    # tau0 = g + tau_p - J^T Lam Y^T tau_p
    for i in range(n):
        tp[i] = 0.0
    for j in range(na):
        tp[6 + j] = m.kp[j] * (m.home[j] - q[6 + j]) - m.kd[j] * qd[6 + j]
    for i in range(6):
        s = 0.0
        for k in range(n):
            s += T.Y[k][i] * tp[k]
        P[i] = s
    for i in range(6):
        s = 0.0
        for k in range(6):
            s += T.Lam[i][k] * P[k]
        F[i] = s
    for i in range(n):
        s = 0.0
        for k in range(6):
            s += T.J[k][i] * F[k]
        T.tau0[i] = T.g[i] + tp[i] - s
    return 0


cdef void object_terms_c(Obj* o, const double* x, const double* v, double MO[6][6],
                         double* Cv, double* Dv, double* g) noexcept nogil:
    cdef double R[3][3]
    cdef double TM[6][6]
    cdef double P[6]
    cdef double w[6]
    cdef double t[3]
    cdef double fz[3]
    cdef double r[3]
    cdef int i, j, k
    cdef double s
    rot(x + 3, R)
    # TM = T * Mb, MO = TM * T^T with T = blockdiag(R, R)
    for i in range(6):
        for j in range(6):
            s = 0.0
            for k in range(3):
                if i < 3:
                    s += R[i][k] * o.M[k][j]
                else:
                    s += R[i - 3][k] * o.M[3 + k][j]
            TM[i][j] = s
    for i in range(6):
        for j in range(6):
            s = 0.0
            for k in range(3):
                if j < 3:
                    s += TM[i][k] * R[j][k]
                else:
                    s += TM[i][3 + k] * R[j - 3][k]
            MO[i][j] = s
    for i in range(6):
        for j in range(i):
            s = 0.5 * (MO[i][j] + MO[j][i])
            MO[i][j] = s
            MO[j][i] = s
    for i in range(6):
        s = 0.0
        for k in range(6):
            s += MO[i][k] * v[k]
        P[i] = s
    crf_times(v, P, Cv)
    cross(v + 3, v, t)
    for i in range(6):
        s = 0.0
        for k in range(3):
            s += MO[i][k] * t[k]
        Cv[i] -= s
    for i in range(6):
        s = o.dquad[i] * fabs(v[i]) * v[i]
        for k in range(6):
            s += o.dlin[i][k] * v[k]
        Dv[i] = s
    fz[0] = 0.0
    fz[1] = 0.0
    fz[2] = o.wnet
    for i in range(3):
        r[i] = R[i][0] * o.roff[0] + R[i][1] * o.roff[1] + R[i][2] * o.roff[2]
    g[0] = 0.0
    g[1] = 0.0
    g[2] = o.wnet
    cross(r, fz, g + 3)


cdef double det_jjt(double J[6][MAXN], int n) noexcept nogil:
    cdef double A[6][6]
    cdef double L[6][6]
    cdef int i, j, k
    cdef double s, d
    for i in range(6):
        for j in range(6):
            s = 0.0
            for k in range(n):
                s += J[i][k] * J[j][k]
            A[i][j] = s
    if chol(&A[0][0], 6, 6, &L[0][0], 6):
        return 0.0
    d = 1.0
    for i in range(6):
        d *= L[i][i] * L[i][i]
    return d


cdef void reconstruct(Grasp* gr, double* p, double R[3][3], double J[6][MAXN], int n,
                      const double* qd, double* xO, double* vO, double* r, double* vi) noexcept nogil:
    cdef double e[3]
    cdef double RO[3][3]
    cdef double t[3]
    cdef int i, j
    euler_of(R, e)
    for i in range(3):
        xO[3 + i] = wrap(e[i] - gr.alpha[i])
    rot(xO + 3, RO)
    for i in range(3):
        r[i] = RO[i][0] * gr.l[0] + RO[i][1] * gr.l[1] + RO[i][2] * gr.l[2]
        xO[i] = p[i] - r[i]
    for i in range(6):
        vi[i] = 0.0
        for j in range(n):
            vi[i] += J[i][j] * qd[j]
    cross(r, vi + 3, t)
    for i in range(3):
        vO[i] = vi[i] + t[i]
        vO[3 + i] = vi[3 + i]


cdef int flow_c(Model* m, Obj* o, Grasp* gr, const double* q, const double* qd,
                const double* u, double* qdd, FlowInfo* info,
                double eps_sing, double eps_pitch, double cond_max,
                Terms* T, Chain* c0, Chain* cp, Chain* cm) noexcept nogil:
    cdef int n = m.n
    cdef int i, j, k
    cdef double r[3]
    cdef double vi[6]
    cdef double rdot[3]
    cdef double Jiodv[6]
    cdef double MO[6][6]
    cdef double COv[6]
    cdef double DOv[6]
    cdef double gO[6]
    cdef double A[6][6]
    cdef double Mt[6][MAXN]
    cdef double MMt[6][6]
    cdef double L6[6][6]
    cdef double Jdqd[6]
    cdef double a6[6]
    cdef double b6[6]
    cdef double c6[6]
    cdef double Civ[6]
    cdef double Div[6]
    cdef double gi[6]
    cdef double t1[6]
    cdef double t2[6]
    cdef double rhs[6]
    cdef double s, dmax, dmin, c = gr.c

    if joint_terms_c(m, q, qd, T, c0, cp, cm):
        info.det = 0.0
        for i in range(n):
            info.tau[i] = 0.0
        return ST_NEAR_SINGULAR
    info.det = det_jjt(T.J, n)
    for i in range(n):
        s = 0.0
        for k in range(6):
            s += T.J[k][i] * u[k]
        info.tau[i] = s + T.tau0[i]
    if not info.det > eps_sing:
        return ST_NEAR_SINGULAR
    reconstruct(gr, T.p, T.R, T.J, n, qd, info.xO, info.vO, r, vi)
    if fabs(info.xO[4]) >= M_PI / 2 - eps_pitch:
        return ST_PITCH
    cross(vi + 3, r, rdot)
    cross(rdot, vi + 3, Jiodv)
    Jiodv[3] = 0.0
    Jiodv[4] = 0.0
    Jiodv[5] = 0.0

    for i in range(6):
        s = 0.0
        for k in range(n):
            s += T.Jdot[i][k] * qd[k]
        Jdqd[i] = s
    # a6 = Y^T Cqd - Jdqd, b6 = Y^T Dqd, c6 = Y^T g
    for i in range(6):
        a6[i] = -Jdqd[i]
        b6[i] = 0.0
        c6[i] = 0.0
        for k in range(n):
            a6[i] += T.Y[k][i] * T.Cqd[k]
            b6[i] += T.Y[k][i] * T.Dqd[k]
            c6[i] += T.Y[k][i] * T.g[k]
    for i in range(6):
        Civ[i] = 0.0
        Div[i] = 0.0
        gi[i] = 0.0
        for k in range(6):
            Civ[i] += T.Lam[i][k] * a6[k]
            Div[i] += T.Lam[i][k] * b6[k]
            gi[i] += T.Lam[i][k] * c6[k]
    object_terms_c(o, info.xO, info.vO, MO, COv, DOv, gO)

    # A = c MO JiO + JOi^T Lam ; JiO = [I S(r); 0 I], JOi^T = [I 0; S(r) I]
    for i in range(6):
        for j in range(6):
            s = MO[i][j]
            if j >= 3:
                s += MO[i][0] * _S(r, 0, j - 3) + MO[i][1] * _S(r, 1, j - 3) + MO[i][2] * _S(r, 2, j - 3)
            A[i][j] = c * s + T.Lam[i][j]
            if i >= 3:
                A[i][j] += _S(r, i - 3, 0) * T.Lam[0][j] + _S(r, i - 3, 1) * T.Lam[1][j] + _S(r, i - 3, 2) * T.Lam[2][j]
    for i in range(6):
        for j in range(n):
            s = 0.0
            for k in range(6):
                s += A[i][k] * T.J[k][j]
            Mt[i][j] = s
    # t1 = JiO Jdqd + Jiodv ; rhs pieces
    for i in range(6):
        t1[i] = Jdqd[i] + Jiodv[i]
    for i in range(3):
        t1[i] += _S(r, i, 0) * Jdqd[3] + _S(r, i, 1) * Jdqd[4] + _S(r, i, 2) * Jdqd[5]
    # t2 = Lam Jdqd + Civ + Div (+ gi)
    for i in range(6):
        s = Civ[i] + Div[i]
        if not gr.compensated:
            s += gi[i]
        for k in range(6):
            s += T.Lam[i][k] * Jdqd[k]
        t2[i] = s
    for i in range(6):
        s = 0.0
        for k in range(6):
            s += MO[i][k] * t1[k]
        rhs[i] = u[i] - t2[i] - c * (s + COv[i] + DOv[i] + gO[i])
    for i in range(3):
        rhs[3 + i] += _S(r, i, 0) * (u[0] - t2[0]) + _S(r, i, 1) * (u[1] - t2[1]) + _S(r, i, 2) * (u[2] - t2[2])
    for i in range(6):
        for j in range(6):
            s = 0.0
            for k in range(n):
                s += Mt[i][k] * Mt[j][k]
            MMt[i][j] = s
    if chol(&MMt[0][0], 6, 6, &L6[0][0], 6):
        return ST_ILL_CONDITIONED
    dmax = L6[0][0]
    dmin = L6[0][0]
    for i in range(1, 6):
        if L6[i][i] > dmax:
            dmax = L6[i][i]
        if L6[i][i] < dmin:
            dmin = L6[i][i]
    if (dmax / dmin) * (dmax / dmin) > cond_max:
        return ST_ILL_CONDITIONED
    chol_solve(&L6[0][0], 6, 6, rhs)
    for j in range(n):
        s = 0.0
        for k in range(6):
            s += Mt[k][j] * rhs[k]
        qdd[j] = s
    return ST_OK


cdef inline double _S(double* r, int i, int j) noexcept nogil:
    # entry (i, j) of skew(r)
    if i == j:
        return 0.0
    if i == 0:
        return -r[2] if j == 1 else r[1]
    if i == 1:
        return r[2] if j == 0 else -r[0]
    return -r[1] if j == 0 else r[0]


cdef struct Work:
    Terms T
    Chain c0
    Chain cp
    Chain cm
    FlowInfo info


cdef int rollout_c(Model* m, Obj* o, Grasp* gr, double* q0, double* qd0, double* U, int K,
                   double h, int substeps, double eps_sing, double eps_pitch, double cond_max,
                   double* Q, double* QD, double* XO, double* VO, double* DET, double* TAU,
                   int* fail, Work* w) noexcept nogil:
    cdef int n = m.n
    cdef int k, s, i, j, st = 0
    cdef double q[MAXN]
    cdef double qd[MAXN]
    cdef double qs[MAXN]
    cdef double vs[MAXN]
    cdef double a1[MAXN]
    cdef double a2[MAXN]
    cdef double a3[MAXN]
    cdef double a4[MAXN]
    cdef double k2q[MAXN]
    cdef double k3q[MAXN]
    cdef double k4q[MAXN]
    cdef double r[3]
    cdef double vi[6]
    cdef double dt = h / substeps
    cdef double* u
    fail[0] = -1
    for i in range(n):
        q[i] = q0[i]
        qd[i] = qd0[i]
        Q[i] = q[i]
        QD[i] = qd[i]
    for k in range(K):
        u = U + 6 * k
        for s in range(substeps):
            st = flow_c(m, o, gr, q, qd, u, a1, &w.info, eps_sing, eps_pitch, cond_max,
                        &w.T, &w.c0, &w.cp, &w.cm)
            if s == 0:
                DET[k] = w.info.det
                for i in range(n):
                    TAU[k * n + i] = w.info.tau[i]
                for i in range(6):
                    if st == ST_OK:
                        XO[k * 6 + i] = w.info.xO[i]
                        VO[k * 6 + i] = w.info.vO[i]
                    elif k > 0:
                        XO[k * 6 + i] = XO[(k - 1) * 6 + i]
                        VO[k * 6 + i] = VO[(k - 1) * 6 + i]
            if st:
                break
            for i in range(n):
                qs[i] = q[i] + 0.5 * dt * qd[i]
                vs[i] = qd[i] + 0.5 * dt * a1[i]
                k2q[i] = vs[i]
            st = flow_c(m, o, gr, qs, vs, u, a2, &w.info, eps_sing, eps_pitch, cond_max,
                        &w.T, &w.c0, &w.cp, &w.cm)
            if st:
                break
            for i in range(n):
                qs[i] = q[i] + 0.5 * dt * k2q[i]
                vs[i] = qd[i] + 0.5 * dt * a2[i]
                k3q[i] = vs[i]
            st = flow_c(m, o, gr, qs, vs, u, a3, &w.info, eps_sing, eps_pitch, cond_max,
                        &w.T, &w.c0, &w.cp, &w.cm)
            if st:
                break
            for i in range(n):
                qs[i] = q[i] + dt * k3q[i]
                vs[i] = qd[i] + dt * a3[i]
                k4q[i] = vs[i]
            st = flow_c(m, o, gr, qs, vs, u, a4, &w.info, eps_sing, eps_pitch, cond_max,
                        &w.T, &w.c0, &w.cp, &w.cm)
            if st:
                break
            for i in range(n):
                q[i] = q[i] + dt / 6.0 * (qd[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
                qd[i] = qd[i] + dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
        if st:
            fail[0] = k
            for j in range(k, K + 1):
                for i in range(n):
                    Q[j * n + i] = Q[k * n + i]
                    QD[j * n + i] = QD[k * n + i]
                    if j > k and j < K:
                        TAU[j * n + i] = TAU[k * n + i]
                if j > k:
                    for i in range(6):
                        XO[j * 6 + i] = XO[k * 6 + i]
                        VO[j * 6 + i] = VO[k * 6 + i]
                    DET[j] = DET[k]
            return st
        for i in range(n):
            Q[(k + 1) * n + i] = q[i]
            QD[(k + 1) * n + i] = qd[i]
    # final output row
    chain(m, q, &w.c0, False)
    DET[K] = det_jjt(w.c0.J, n)
    reconstruct(gr, w.c0.p, w.c0.R, w.c0.J, n, qd, XO + 6 * K, VO + 6 * K, r, vi)
    return 0


# ---------------------------------------------------------------- Python surface

cdef class KernelModel:
    cdef Model m
    cdef public int n, na, nb

    def __init__(self, dh, base_T, tool_T, body_frame, body_com, body_inertia,
                 body_wmb, dlin, dquad, armature, home, kp, kd, delta_j=1e-6):
        dh = np.asarray(dh, dtype=float).reshape(-1, 4)
        base_T = np.asarray(base_T, dtype=float)
        tool_T = np.asarray(tool_T, dtype=float)
        body_frame = np.asarray(body_frame, dtype=int)
        nb = len(body_frame)
        body_com = np.asarray(body_com, dtype=float).reshape(nb, 3)
        body_inertia = np.asarray(body_inertia, dtype=float).reshape(nb, 6, 6)
        body_wmb = np.asarray(body_wmb, dtype=float).reshape(nb)
        na = dh.shape[0]
        n = 6 + na
        if na > MAXA or nb > MAXB:
            raise ValueError(f"compiled kernel supports at most {MAXA} arm joints and {MAXB} bodies")
        dlin = np.asarray(dlin, dtype=float).reshape(n)
        dquad = np.asarray(dquad, dtype=float).reshape(n)
        armature = np.asarray(armature, dtype=float).reshape(na)
        home = np.asarray(home, dtype=float).reshape(na)
        kp = np.asarray(kp, dtype=float).reshape(na)
        kd = np.asarray(kd, dtype=float).reshape(na)
        self.n = n
        self.na = na
        self.nb = nb
        self.m.n = n
        self.m.na = na
        self.m.nb = nb
        self.m.delta = float(delta_j)
        cdef int i, j, k
        for i in range(na):
            for j in range(4):
                self.m.dh[i][j] = dh[i, j]
            self.m.armature[i] = armature[i]
            self.m.home[i] = home[i]
            self.m.kp[i] = kp[i]
            self.m.kd[i] = kd[i]
        for i in range(3):
            self.m.basep[i] = base_T[i, 3]
            self.m.toolp[i] = tool_T[i, 3]
            for j in range(3):
                self.m.baseR[i][j] = base_T[i, j]
                self.m.toolR[i][j] = tool_T[i, j]
        for k in range(nb):
            self.m.body_frame[k] = body_frame[k]
            self.m.body_wmb[k] = body_wmb[k]
            for i in range(3):
                self.m.body_com[k][i] = body_com[k, i]
            for i in range(6):
                for j in range(6):
                    self.m.body_M[k][i][j] = body_inertia[k, i, j]
        for i in range(n):
            self.m.dlin[i] = dlin[i]
            self.m.dquad[i] = dquad[i]


cdef class KernelObject:
    cdef Obj o

    def __init__(self, inertia, dlin, dquad, wnet, roff):
        inertia = np.asarray(inertia, dtype=float).reshape(6, 6)
        dlin = np.asarray(dlin, dtype=float).reshape(6, 6)
        dquad = np.asarray(dquad, dtype=float).reshape(6)
        roff = np.asarray(roff, dtype=float).reshape(3)
        cdef int i, j
        for i in range(6):
            self.o.dquad[i] = dquad[i]
            for j in range(6):
                self.o.M[i][j] = inertia[i, j]
                self.o.dlin[i][j] = dlin[i, j]
        self.o.wnet = float(wnet)
        for i in range(3):
            self.o.roff[i] = roff[i]


cdef class KernelGrasp:
    cdef Grasp g

    def __init__(self, l, alpha, c, compensated=True):
        l = np.asarray(l, dtype=float).reshape(3)
        alpha = np.asarray(alpha, dtype=float).reshape(3)
        cdef int i
        for i in range(3):
            self.g.l[i] = l[i]
            self.g.alpha[i] = alpha[i]
        self.g.c = float(c)
        self.g.compensated = 1 if compensated else 0


def _vec(x, int n):
    a = np.ascontiguousarray(x, dtype=float).reshape(n)
    return a


def ee_kinematics(KernelModel m, q):
    cdef double[::1] qv = _vec(q, m.n)
    cdef Chain* c = <Chain*> malloc(sizeof(Chain))
    cdef int i, j, n = m.n
    try:
        chain(&m.m, &qv[0], c, False)
        p = np.array([c.p[0], c.p[1], c.p[2]])
        R = np.array([[c.R[i][j] for j in range(3)] for i in range(3)])
        J = np.empty((6, n))
        for i in range(6):
            for j in range(n):
                J[i, j] = c.J[i][j]
    finally:
        free(c)
    return p, R, J


def joint_terms(KernelModel m, q, qd):
    cdef double[::1] qv = _vec(q, m.n)
    cdef double[::1] qdv = _vec(qd, m.n)
    cdef Work* w = <Work*> malloc(sizeof(Work))
    cdef int i, j, n = m.n, rc
    try:
        rc = joint_terms_c(&m.m, &qv[0], &qdv[0], &w.T, &w.c0, &w.cp, &w.cm)
        if rc:
            raise np.linalg.LinAlgError("joint-space or task-space inertia not positive definite")
        M = np.empty((n, n))
        J = np.empty((6, n))
        Jd = np.empty((6, n))
        Cqd = np.empty(n)
        Dqd = np.empty(n)
        g = np.empty(n)
        tau0 = np.empty(n)
        for i in range(n):
            Cqd[i] = w.T.Cqd[i]
            Dqd[i] = w.T.Dqd[i]
            g[i] = w.T.g[i]
            tau0[i] = w.T.tau0[i]
            for j in range(n):
                M[i, j] = w.T.M[i][j]
        for i in range(6):
            for j in range(n):
                J[i, j] = w.T.J[i][j]
                Jd[i, j] = w.T.Jdot[i][j]
        p = np.array([w.T.p[0], w.T.p[1], w.T.p[2]])
        R = np.array([[w.T.R[i][j] for j in range(3)] for i in range(3)])
    finally:
        free(w)
    return M, Cqd, Dqd, g, J, Jd, p, R, tau0


def object_terms(KernelObject o, x, v):
    cdef double[::1] xv = _vec(x, 6)
    cdef double[::1] vv = _vec(v, 6)
    cdef double MO[6][6]
    cdef double Cv[6]
    cdef double Dv[6]
    cdef double g[6]
    cdef int i, j
    object_terms_c(&o.o, &xv[0], &vv[0], MO, Cv, Dv, g)
    M = np.array([[MO[i][j] for j in range(6)] for i in range(6)])
    return (M, np.array([Cv[i] for i in range(6)]), np.array([Dv[i] for i in range(6)]),
            np.array([g[i] for i in range(6)]))


def flow(KernelModel m, KernelObject o, KernelGrasp gr, q, qd, u,
         double eps_sing=1e-6, double eps_pitch=0.05, double cond_max=1e12):
    cdef double[::1] qv = _vec(q, m.n)
    cdef double[::1] qdv = _vec(qd, m.n)
    cdef double[::1] uv = _vec(u, 6)
    out = np.zeros(m.n)
    cdef double[::1] ov = out
    cdef Work* w = <Work*> malloc(sizeof(Work))
    cdef int st, i, n = m.n
    try:
        st = flow_c(&m.m, &o.o, &gr.g, &qv[0], &qdv[0], &uv[0], &ov[0], &w.info,
                    eps_sing, eps_pitch, cond_max, &w.T, &w.c0, &w.cp, &w.cm)
        info = {"det": w.info.det,
                "tau": np.array([w.info.tau[i] for i in range(n)])}
        if st == ST_OK:
            info["xO"] = np.array([w.info.xO[i] for i in range(6)])
            info["vO"] = np.array([w.info.vO[i] for i in range(6)])
        else:
            out[:] = 0.0
    finally:
        free(w)
    return out, st, info


def object_output(KernelModel m, KernelGrasp gr, q, qd):
    cdef double[::1] qv = _vec(q, m.n)
    cdef double[::1] qdv = _vec(qd, m.n)
    cdef Chain* c = <Chain*> malloc(sizeof(Chain))
    cdef double xO[6]
    cdef double vO[6]
    cdef double r[3]
    cdef double vi[6]
    cdef double det
    cdef int i
    try:
        chain(&m.m, &qv[0], c, False)
        det = det_jjt(c.J, m.n)
        reconstruct(&gr.g, c.p, c.R, c.J, m.n, &qdv[0], xO, vO, r, vi)
    finally:
        free(c)
    return (np.array([xO[i] for i in range(6)]), np.array([vO[i] for i in range(6)]), det)


def rollout(KernelModel m, KernelObject o, KernelGrasp gr, q0, qd0, U, double h, int substeps,
            double eps_sing=1e-6, double eps_pitch=0.05, double cond_max=1e12):
    cdef int n = m.n
    Ua = np.ascontiguousarray(U, dtype=float)
    if Ua.size == 0:
        Ua = np.zeros((0, 6))
    Ua = Ua.reshape(-1, 6)
    cdef int K = Ua.shape[0]
    cdef double[::1] qv = _vec(q0, n)
    cdef double[::1] qdv = _vec(qd0, n)
    Q = np.zeros((K + 1, n))
    QD = np.zeros((K + 1, n))
    XO = np.zeros((K + 1, 6))
    VO = np.zeros((K + 1, 6))
    DET = np.zeros(K + 1)
    TAU = np.zeros((max(K, 1), n))
    cdef double[:, ::1] Uv = Ua if K > 0 else np.zeros((1, 6))
    cdef double[:, ::1] Qv = Q
    cdef double[:, ::1] QDv = QD
    cdef double[:, ::1] XOv = XO
    cdef double[:, ::1] VOv = VO
    cdef double[::1] DETv = DET
    cdef double[:, ::1] TAUv = TAU
    cdef int fail = -1, st
    cdef Work* w = <Work*> malloc(sizeof(Work))
    try:
        with nogil:
            st = rollout_c(&m.m, &o.o, &gr.g, &qv[0], &qdv[0], &Uv[0, 0], K, h, substeps,
                           eps_sing, eps_pitch, cond_max, &Qv[0, 0], &QDv[0, 0], &XOv[0, 0],
                           &VOv[0, 0], &DETv[0], &TAUv[0, 0], &fail, w)
    finally:
        free(w)
    return Q, QD, XO, VO, DET, TAU[:K], st, fail
