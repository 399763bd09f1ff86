# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``kinscl._kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

DEF GODUNOV = 0
DEF ENGQUIST_OSHER = 1


cdef inline double horner(const double[::1] c, double x) noexcept nogil:
    cdef Py_ssize_t i, n = c.shape[0]
    cdef double acc = c[n - 1]
    for i in range(n - 2, -1, -1):
        acc = acc * x + c[i]
    return acc


cdef inline void godunov(double a, double b, const double[::1] A, const double[::1] q,
                         const double[::1] crit, double* F, double* Q) noexcept nogil:
    cdef double Aa = horner(A, a), Ab = horner(A, b), w, Aw, c, Ac
    cdef Py_ssize_t k
    if a <= b:
        if Aa <= Ab:
            w = a; Aw = Aa
        else:
            w = b; Aw = Ab
        for k in range(crit.shape[0]):
            c = crit[k]
            if a < c and c < b:
                Ac = horner(A, c)
                if Ac < Aw:
                    w = c; Aw = Ac
    else:
        if Aa >= Ab:
            w = a; Aw = Aa
        else:
            w = b; Aw = Ab
        for k in range(crit.shape[0]):
            c = crit[k]
            if b < c and c < a:
                Ac = horner(A, c)
                if Ac > Aw:
                    w = c; Aw = Ac
    F[0] = Aw
    Q[0] = horner(q, w)


cdef inline void split(double u, const double[::1] A, const double[::1] q,
                       const double[::1] crit, double* Ainc, double* Adec,
                       double* qinc, double* qdec) noexcept nogil:
    # walk [0, u] (or [u, 0]) piecewise between critical points of A
    cdef double p, r, dA, dq, sgn
    cdef Py_ssize_t k, n = crit.shape[0]
    Ainc[0] = 0.0; Adec[0] = 0.0; qinc[0] = 0.0; qdec[0] = 0.0
    if u >= 0:
        sgn = 1.0
        p = 0.0
        for k in range(n + 1):
            if k < n:
                if crit[k] <= 0.0:
                    continue
                r = crit[k] if crit[k] < u else u
            else:
                r = u
            if r > p:
                dA = horner(A, r) - horner(A, p)
                dq = horner(q, r) - horner(q, p)
                if dA > 0:
                    Ainc[0] += dA; qinc[0] += dq
                else:
                    Adec[0] += dA; qdec[0] += dq
                p = r
            if p >= u:
                break
    else:
        sgn = -1.0
        p = 0.0
        for k in range(n, -1, -1):
            if k > 0:
                if crit[k - 1] >= 0.0:
                    continue
                r = crit[k - 1] if crit[k - 1] > u else u
            else:
                r = u
            if r < p:
                dA = horner(A, p) - horner(A, r)
                dq = horner(q, p) - horner(q, r)
                if dA > 0:
                    Ainc[0] -= dA; qinc[0] -= dq
                else:
                    Adec[0] -= dA; qdec[0] -= dq
                p = r
            if p <= u:
                break


cdef inline void iflux(double a, double b, double lam, int kind, const double[::1] A,
                       const double[::1] q, const double[::1] crit,
                       double* F, double* Q) noexcept nogil:
    cdef double ai, ad, qi, qd, bi, bd, qbi, qbd
    if kind == GODUNOV:
        godunov(a, b, A, q, crit, F, Q)
    elif kind == ENGQUIST_OSHER:
        split(a, A, q, crit, &ai, &ad, &qi, &qd)
        split(b, A, q, crit, &bi, &bd, &qbi, &qbd)
        F[0] = A[0] + ai + bd
        Q[0] = qi + qbd
    else:
        F[0] = 0.5 * (horner(A, a) + horner(A, b)) - (b - a) / (2.0 * lam)
        Q[0] = 0.5 * (horner(q, a) + horner(q, b)) - (0.5 * b * b - 0.5 * a * a) / (2.0 * lam)


def fv_sweep(double[:, ::1] u, double lam, int kind, const double[::1] A,
             const double[::1] q, const double[::1] crit):
    cdef Py_ssize_t B = u.shape[0], N = u.shape[1], r, i
    out = np.empty((B, N))
    diss = np.empty((B, N))
    cdef double[:, ::1] uo = out
    cdef double[:, ::1] d = diss
    cdef double[::1] FR = np.empty(N)
    cdef double[::1] QR = np.empty(N)
    cdef double ui, un
    with nogil:
        for r in range(B):
            for i in range(N):
                iflux(u[r, i], u[r, (i + 1) % N], lam, kind, A, q, crit, &FR[i], &QR[i])
            for i in range(N):
                ui = u[r, i]
                un = ui - lam * (FR[i] - FR[(i + N - 1) % N])
                uo[r, i] = un
                d[r, i] = 0.5 * ui * ui - 0.5 * un * un - lam * (QR[i] - QR[(i + N - 1) % N])
    return out, diss


def bgk_transport(double[:, :, ::1] f, const double[::1] nu):
    cdef Py_ssize_t B = f.shape[0], N = f.shape[1], M = f.shape[2], r, i, j, il, ir
    out = np.empty((B, N, M))
    cdef double[:, :, ::1] o = out
    cdef double v
    with nogil:
        for r in range(B):
            for i in range(N):
                il = (i + N - 1) % N
                ir = (i + 1) % N
                for j in range(M):
                    v = nu[j]
                    if v >= 0:
                        o[r, i, j] = f[r, i, j] - v * (f[r, i, j] - f[r, il, j])
                    else:
                        o[r, i, j] = f[r, i, j] - v * (f[r, ir, j] - f[r, i, j])
    return out


cdef inline double ghosted(double[:, :, ::1] f, Py_ssize_t r, Py_ssize_t i,
                           Py_ssize_t j, Py_ssize_t M) noexcept nogil:
    if j < 0:
        return 1.0
    if j >= M:
        return 0.0
    return f[r, i, j]


def xi_shift(double[:, :, ::1] f, double[:, ::1] s, double dxi):
    cdef Py_ssize_t B = f.shape[0], N = f.shape[1], M = f.shape[2], r, i, j, qi
    out = np.empty((B, N, M))
    cdef double[:, :, ::1] o = out
    cdef double pos, qf, th
    with nogil:
        for r in range(B):
            for i in range(N):
                pos = s[r, i] / dxi
                qf = floor(pos)
                th = pos - qf
                qi = <Py_ssize_t> qf
                for j in range(M):
                    o[r, i, j] = ((1.0 - th) * ghosted(f, r, i, j - qi, M)
                                  + th * ghosted(f, r, i, j - qi - 1, M))
    return out
