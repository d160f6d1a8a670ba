# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernels; signatures mirror ``_pykernels``."""

import numpy as np

from libc.math cimport fabs, sqrt

cdef int MAX_SWEEPS = 100


def jacobi_eigh(a, double tol):
    cdef double[:, ::1] A = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = A.shape[0]
    v_arr = np.eye(n)
    cdef double[:, ::1] V = v_arr
    cdef Py_ssize_t i, k, p, q
    cdef int sweep
    cdef double scale = 0.0, off, apq, theta, t, c, s, x, y
    for i in range(n):
        for k in range(n):
            scale += A[i, k] * A[i, k]
    scale = sqrt(scale)
    if n < 2 or scale == 0.0:
        return np.array([A[i, i] for i in range(n)]), v_arr
    for sweep in range(MAX_SWEEPS):
        off = 0.0
        for i in range(n - 1):
            for k in range(i + 1, n):
                off += A[i, k] * A[i, k]
        off = sqrt(2.0 * off)
        if off <= tol * scale:
            return np.array([A[i, i] for i in range(n)]), v_arr
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(1.0 + theta * theta))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    x = A[k, p]
                    y = A[k, q]
                    A[k, p] = c * x - s * y
                    A[k, q] = s * x + c * y
                for k in range(n):
                    x = A[p, k]
                    y = A[q, k]
                    A[p, k] = c * x - s * y
                    A[q, k] = s * x + c * y
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    x = V[k, p]
                    y = V[k, q]
                    V[k, p] = c * x - s * y
                    V[k, q] = s * x + c * y
    raise RuntimeError("Jacobi eigenvalue iteration did not converge")


def jacobi_svd(a, double tol):
    # Column-major copy so column sweeps are contiguous.
    u_arr = np.array(a, dtype=np.float64, order="F", copy=True)
    cdef double[::1, :] U = u_arr
    cdef Py_ssize_t m = U.shape[0], n = U.shape[1]
    v_arr = np.asfortranarray(np.eye(n))
    cdef double[::1, :] V = v_arr
    cdef Py_ssize_t p, q, k
    cdef int sweep, rotated
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    for sweep in range(MAX_SWEEPS):
        rotated = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(m):
                    alpha += U[k, p] * U[k, p]
                    beta += U[k, q] * U[k, q]
                    gamma += U[k, p] * U[k, q]
                if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                    continue
                rotated = 1
                zeta = (beta - alpha) / (2.0 * gamma)
                t = 1.0 / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(m):
                    x = U[k, p]
                    y = U[k, q]
                    U[k, p] = c * x - s * y
                    U[k, q] = s * x + c * y
                for k in range(n):
                    x = V[k, p]
                    y = V[k, q]
                    V[k, p] = c * x - s * y
                    V[k, q] = s * x + c * y
        if not rotated:
            u_out = np.ascontiguousarray(u_arr)
            return u_out, np.sqrt(np.sum(u_out * u_out, axis=0)), np.ascontiguousarray(v_arr)
    raise RuntimeError("one-sided Jacobi SVD did not converge")


def _as_2d(rhs):
    x = np.array(rhs, dtype=np.float64, order="C", copy=True)
    if x.ndim == 1:
        return x.reshape(-1, 1), True
    return x, False


def forward_sub_unit(b, rhs):
    cdef double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    x_arr, flat = _as_2d(rhs)
    cdef double[:, ::1] X = x_arr
    cdef Py_ssize_t n = B.shape[0], ncol = X.shape[1], i, k, c
    cdef double acc
    for c in range(ncol):
        for i in range(1, n):
            acc = 0.0
            for k in range(i):
                acc += B[i, k] * X[k, c]
            X[i, c] -= acc
    return x_arr.ravel() if flat else x_arr


def back_sub_unit(b, rhs):
    cdef double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    x_arr, flat = _as_2d(rhs)
    cdef double[:, ::1] X = x_arr
    cdef Py_ssize_t n = B.shape[0], ncol = X.shape[1], i, k, c
    cdef double acc
    for c in range(ncol):
        for i in range(n - 2, -1, -1):
            acc = 0.0
            for k in range(i + 1, n):
                acc += B[i, k] * X[k, c]
            X[i, c] -= acc
    return x_arr.ravel() if flat else x_arr


def first_argmax(values, double rtol, double atol=0.0):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    cdef double top = v[0]
    for i in range(1, n):
        if v[i] > top:
            top = v[i]
    top = top - max(rtol * top, atol)
    for i in range(n):
        if v[i] >= top:
            return i
    return 0


def pivot_scan(r, double rtol, double atol=0.0):
    cdef double[:, :] R = np.asarray(r, dtype=np.float64)
    cdef Py_ssize_t m = R.shape[0], n = R.shape[1], i, j, jbest = 0, ibest = 0
    colmax_arr = np.zeros(n)
    cdef double[::1] colmax = colmax_arr
    cdef double a, top = 0.0
    for j in range(n):
        for i in range(m):
            a = fabs(R[i, j])
            if a > colmax[j]:
                colmax[j] = a
        if colmax[j] > top:
            top = colmax[j]
    top = top - max(rtol * top, atol)
    for j in range(n):
        if colmax[j] >= top:
            jbest = j
            break
    top = colmax[jbest]
    top = top - max(rtol * top, atol)
    for i in range(m):
        if fabs(R[i, jbest]) >= top:
            ibest = i
            break
    return ibest, jbest, R[ibest, jbest]


def rank1_update(r, col, row, double pivot):
    cdef double[:, :] R = r
    cdef double[::1] u = np.ascontiguousarray(col, dtype=np.float64)
    cdef double[::1] v = np.ascontiguousarray(row, dtype=np.float64)
    cdef Py_ssize_t m = R.shape[0], n = R.shape[1], i, j
    for i in range(m):
        for j in range(n):
            R[i, j] -= (u[i] * v[j]) / pivot
