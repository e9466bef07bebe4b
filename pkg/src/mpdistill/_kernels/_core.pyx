# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: dense layers, activations, and trajectory assembly.

Mirrors pyref.py. Plain loops beat BLAS-through-numpy here because the
matrices are tiny and per-call overhead dominates single-sample latency.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, sqrt, tanh

cnp.import_array()

ACT_LINEAR = 0
ACT_TANH = 1
ACT_GELU = 2

BACKEND_NAME = "compiled"

cdef double INV_SQRT2 = 1.0 / sqrt(2.0)
cdef double INV_SQRT2PI = 1.0 / sqrt(2.0 * 3.14159265358979323846)


def dense_fwd(const double[:, ::1] W, const double[::1] b, const double[::1] x):
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(m):
        acc = b[i]
        for j in range(n):
            acc += W[i, j] * x[j]
        y[i] = acc
    return out


def dense_fwd_batch(const double[:, ::1] W, const double[::1] b, const double[:, ::1] X):
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1], B = X.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    out = np.empty((B, m), dtype=np.float64)
    cdef double[:, ::1] Y = out
    for k in range(B):
        for i in range(m):
            acc = b[i]
            for j in range(n):
                acc += W[i, j] * X[k, j]
            Y[k, i] = acc
    return out


def dense_bwd(const double[:, ::1] W, const double[::1] x, const double[::1] dy):
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1]
    cdef Py_ssize_t i, j
    dx_arr = np.zeros(n, dtype=np.float64)
    dW_arr = np.empty((m, n), dtype=np.float64)
    db_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] dx = dx_arr
    cdef double[:, ::1] dW = dW_arr
    cdef double[::1] db = db_arr
    cdef double g
    for i in range(m):
        g = dy[i]
        db[i] = g
        for j in range(n):
            dW[i, j] = g * x[j]
            dx[j] += W[i, j] * g
    return dx_arr, dW_arr, db_arr


def dense_bwd_batch(const double[:, ::1] W, const double[:, ::1] X, const double[:, ::1] dY):
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1], B = X.shape[0]
    cdef Py_ssize_t i, j, k
    dX_arr = np.zeros((B, n), dtype=np.float64)
    dW_arr = np.zeros((m, n), dtype=np.float64)
    db_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] dX = dX_arr
    cdef double[:, ::1] dW = dW_arr
    cdef double[::1] db = db_arr
    cdef double g
    for k in range(B):
        for i in range(m):
            g = dY[k, i]
            db[i] += g
            for j in range(n):
                dW[i, j] += g * X[k, j]
                dX[k, j] += W[i, j] * g
    return dX_arr, dW_arr, db_arr


def act_fwd(int kind, const double[::1] z):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i
    cdef double v
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] a = out
    if kind == 0:
        for i in range(n):
            a[i] = z[i]
    elif kind == 1:
        for i in range(n):
            a[i] = tanh(z[i])
    elif kind == 2:
        for i in range(n):
            v = z[i]
            a[i] = 0.5 * v * (1.0 + erf(v * INV_SQRT2))
    else:
        raise ValueError(f"unknown activation kind {kind}")
    return out


def act_bwd(int kind, const double[::1] z, const double[::1] da):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i
    cdef double v, t
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] dz = out
    if kind == 0:
        for i in range(n):
            dz[i] = da[i]
    elif kind == 1:
        for i in range(n):
            t = tanh(z[i])
            dz[i] = da[i] * (1.0 - t * t)
    elif kind == 2:
        for i in range(n):
            v = z[i]
            dz[i] = da[i] * (0.5 * (1.0 + erf(v * INV_SQRT2))
                             + v * exp(-0.5 * v * v) * INV_SQRT2PI)
    else:
        raise ValueError(f"unknown activation kind {kind}")
    return out


def decode_combine(const double[:, ::1] pos_basis, const double[:, ::1] vel_basis,
                   const double[::1] y1, const double[::1] y2,
                   const double[::1] y1d, const double[::1] y2d,
                   const double[::1] c1, const double[::1] c2,
                   const double[:, ::1] theta):
    cdef Py_ssize_t H = pos_basis.shape[0], K1 = pos_basis.shape[1]
    cdef Py_ssize_t dof = theta.shape[0]
    cdef Py_ssize_t t, d, j
    cdef double accp, accv
    P_arr = np.empty((H, dof), dtype=np.float64)
    V_arr = np.empty((H, dof), dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[:, ::1] V = V_arr
    for t in range(H):
        for d in range(dof):
            accp = y1[t] * c1[d] + y2[t] * c2[d]
            accv = y1d[t] * c1[d] + y2d[t] * c2[d]
            for j in range(K1):
                accp += pos_basis[t, j] * theta[d, j]
                accv += vel_basis[t, j] * theta[d, j]
            P[t, d] = accp
            V[t, d] = accv
    return P_arr, V_arr
