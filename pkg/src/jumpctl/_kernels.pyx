# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.  Semantics match ``_kernels_py``."""
import numpy as np
cimport cython


def chain_paths(const double[:, ::1] cdf, const double[:, ::1] u, const long long[::1] init):
    cdef Py_ssize_t trials = u.shape[0], T = u.shape[1], S = cdf.shape[0]
    cdef Py_ssize_t r, t, j
    cdef long long cur
    cdef double ut
    out = np.empty((trials, T + 1), dtype=np.int64)
    cdef long long[:, ::1] modes = out
    with nogil:
        for r in range(trials):
            cur = init[r]
            modes[r, 0] = cur
            for t in range(T):
                ut = u[r, t]
                j = 0
                while j < S - 1 and cdf[cur, j] <= ut:
                    j += 1
                cur = j
                modes[r, t + 1] = cur
    return out


cdef inline void matvec(const double* A, Py_ssize_t rows, Py_ssize_t cols,
                        const double* v, double* out, double scale,
                        bint accumulate) noexcept nogil:
    # out (+)= scale * A v for a row-major A
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(rows):
        s = 0.0
        for j in range(cols):
            s += A[i * cols + j] * v[j]
        if accumulate:
            out[i] += scale * s
        else:
            out[i] = scale * s


def closed_loop(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] G,
                const double[:, ::1] C, const double[:, ::1] D, const double[:, ::1] L,
                const double[:, ::1] H, const double[:, :, ::1] F, const double[:, :, ::1] M,
                const long long[:, ::1] theta_prev, const long long[:, ::1] eta,
                const signed char[:, ::1] nu, const signed char[:, ::1] gam,
                const double[:, :, ::1] w, const double[::1] x0, const double[::1] xh0):
    cdef Py_ssize_t trials = eta.shape[0], T1 = eta.shape[1]
    cdef Py_ssize_t nx = A.shape[0], nu_dim = B.shape[1], ny = L.shape[0]
    cdef Py_ssize_t nz = C.shape[0]
    x_a = np.empty((trials, T1, nx))
    xh_a = np.empty((trials, T1, nx))
    e_a = np.empty((trials, T1, nx))
    u_a = np.empty((trials, T1, nu_dim))
    y_a = np.empty((trials, T1, ny))
    z2_a = np.empty((trials, T1))
    cdef double[:, :, ::1] x = x_a, xh = xh_a, e = e_a, u = u_a, y = y_a
    cdef double[:, ::1] z2 = z2_a
    cdef double[::1] xn = np.empty(nx), xhn = np.empty(nx), en = np.empty(nx)
    cdef double[::1] tmp = np.empty(max(ny, nz)), innov = np.empty(ny)
    cdef double[::1] bu = np.empty(nx), z = np.empty(nz)
    cdef Py_ssize_t r, k, i, j, th, et
    cdef double vk, gk, s
    with nogil:
        for r in range(trials):
            for i in range(nx):
                x[r, 0, i] = x0[i]
                xh[r, 0, i] = xh0[i]
                e[r, 0, i] = x0[i] - xh0[i]
            for k in range(T1):
                th = theta_prev[r, k]
                et = eta[r, k]
                vk = nu[r, k]
                gk = gam[r, k]
                # u = F[th] xh
                for i in range(nu_dim):
                    s = 0.0
                    for j in range(nx):
                        s += F[th, i, j] * xh[r, k, j]
                    u[r, k, i] = s
                # y = gamma (L x + H w)
                matvec(&L[0, 0], L.shape[0], L.shape[1], &x[r, k, 0], &y[r, k, 0], 1.0, False)
                matvec(&H[0, 0], H.shape[0], H.shape[1], &w[r, k, 0], &y[r, k, 0], 1.0, True)
                for i in range(ny):
                    y[r, k, i] = gk * y[r, k, i]
                # z = C x + nu D u
                matvec(&C[0, 0], C.shape[0], C.shape[1], &x[r, k, 0], &z[0], 1.0, False)
                matvec(&D[0, 0], D.shape[0], D.shape[1], &u[r, k, 0], &z[0], vk, True)
                s = 0.0
                for i in range(nz):
                    s += z[i] * z[i]
                z2[r, k] = s
                if k == T1 - 1:
                    break
                matvec(&B[0, 0], B.shape[0], B.shape[1], &u[r, k, 0], &bu[0], vk, False)
                # plant
                matvec(&A[0, 0], A.shape[0], A.shape[1], &x[r, k, 0], &xn[0], 1.0, False)
                for i in range(nx):
                    xn[i] += bu[i]
                matvec(&G[0, 0], G.shape[0], G.shape[1], &w[r, k, 0], &xn[0], 1.0, True)
                # observer
                matvec(&L[0, 0], L.shape[0], L.shape[1], &xh[r, k, 0], &tmp[0], gk, False)
                for i in range(ny):
                    innov[i] = y[r, k, i] - tmp[i]
                matvec(&A[0, 0], A.shape[0], A.shape[1], &xh[r, k, 0], &xhn[0], 1.0, False)
                for i in range(nx):
                    s = 0.0
                    for j in range(ny):
                        s += M[et, i, j] * innov[j]
                    xhn[i] += bu[i] - s
                # error: (A + g M L) e + (G + g M H) w
                matvec(&A[0, 0], A.shape[0], A.shape[1], &e[r, k, 0], &en[0], 1.0, False)
                matvec(&G[0, 0], G.shape[0], G.shape[1], &w[r, k, 0], &en[0], 1.0, True)
                if gk != 0.0:
                    matvec(&L[0, 0], L.shape[0], L.shape[1], &e[r, k, 0], &tmp[0], 1.0, False)
                    matvec(&H[0, 0], H.shape[0], H.shape[1], &w[r, k, 0], &tmp[0], 1.0, True)
                    for i in range(nx):
                        s = 0.0
                        for j in range(ny):
                            s += M[et, i, j] * tmp[j]
                        en[i] += gk * s
                for i in range(nx):
                    x[r, k + 1, i] = xn[i]
                    xh[r, k + 1, i] = xhn[i]
                    e[r, k + 1, i] = en[i]
    return x_a, xh_a, e_a, u_a, y_a, z2_a
