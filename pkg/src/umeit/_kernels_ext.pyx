# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled marching kernels. Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef int _gtsv(double[::1] dl, double[::1] d, double[::1] du, double[::1] b) noexcept nogil:
    # dl[i] is the sub-diagonal entry of row i+1, du[i] the super-diagonal of row i;
    # LAPACK dgtsv elimination with row interchanges, dl reused as second super-diagonal.
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t i
    cdef double fact, temp
    for i in range(n - 1):
        if fabs(d[i]) >= fabs(dl[i]):
            if d[i] == 0.0:
                return 1
            fact = dl[i] / d[i]
            d[i + 1] -= fact * du[i]
            b[i + 1] -= fact * b[i]
            dl[i] = 0.0
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            temp = d[i + 1]
            d[i + 1] = du[i] - fact * temp
            if i < n - 2:
                dl[i] = du[i + 1]
                du[i + 1] = -fact * dl[i]
            du[i] = temp
            temp = b[i]
            b[i] = b[i + 1]
            b[i + 1] = temp - fact * b[i + 1]
    if d[n - 1] == 0.0:
        return 1
    b[n - 1] = b[n - 1] / d[n - 1]
    if n > 1:
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i]
    return 0


def tridiag_solve(lower, diag, upper, rhs):
    cdef Py_ssize_t n = diag.shape[0]
    cdef double[::1] dl = np.ascontiguousarray(lower[1:], dtype=np.float64).copy()
    cdef double[::1] d = np.ascontiguousarray(diag, dtype=np.float64).copy()
    cdef double[::1] du = np.ascontiguousarray(upper[:n - 1], dtype=np.float64).copy()
    out = np.ascontiguousarray(rhs, dtype=np.float64).copy()
    cdef double[::1] b = out
    cdef int info
    with nogil:
        info = _gtsv(dl, d, du, b)
    if info:
        raise np.linalg.LinAlgError("singular tridiagonal system")
    return out


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    cdef Py_ssize_t n = diag.shape[0]
    cdef double alpha = lower[0]
    cdef double beta = upper[n - 1]
    cdef double gamma = -diag[0] if diag[0] != 0.0 else 1.0
    d = np.array(diag, dtype=np.float64)
    d[0] -= gamma
    d[n - 1] -= alpha * beta / gamma
    y = tridiag_solve(lower, d, upper, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[n - 1] = beta
    z = tridiag_solve(lower, d, upper, u)
    cdef double vy = y[0] + alpha / gamma * y[n - 1]
    cdef double vz = z[0] + alpha / gamma * z[n - 1]
    return y - z * (vy / (1.0 + vz))


def leapfrog_solve(double[::1] a, double[::1] d, double[::1] rhs, double[::1] guess,
                   double inv_dt2, double h, bint periodic):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t j
    cdef double c0, cn
    lower = np.empty(n)
    diag = np.empty(n)
    upper = np.empty(n)
    b = np.empty(n)
    cdef double[::1] lo = lower
    cdef double[::1] di = diag
    cdef double[::1] up = upper
    cdef double[::1] bb = b
    for j in range(n):
        lo[j] = -a[j] / (2.0 * h)
        up[j] = a[j] / (2.0 * h)
        di[j] = inv_dt2 + d[j]
        bb[j] = rhs[j]
    if periodic:
        return cyclic_tridiag_solve(lower, diag, upper, b)
    c0 = a[0] / (2.0 * h)
    cn = a[n - 1] / (2.0 * h)
    di[0] += -3.0 * c0
    up[0] = 4.0 * c0
    bb[0] += c0 * guess[2]
    di[n - 1] += 3.0 * cn
    lo[n - 1] = -4.0 * cn
    bb[n - 1] -= cn * guess[n - 3]
    return tridiag_solve(lower, diag, upper, b)


def lateral_d1(double[::1] v, double h, bint periodic):
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t j
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double inv = 1.0 / (2.0 * h)
    for j in range(1, n - 1):
        o[j] = (v[j + 1] - v[j - 1]) * inv
    if periodic:
        o[0] = (v[1] - v[n - 1]) * inv
        o[n - 1] = (v[0] - v[n - 2]) * inv
    else:
        o[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * inv
        o[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * inv
    return out


def lateral_d2(double[::1] v, double h, bint periodic):
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t j
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double inv = 1.0 / (h * h)
    for j in range(1, n - 1):
        o[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) * inv
    if periodic:
        o[0] = (v[1] - 2.0 * v[0] + v[n - 1]) * inv
        o[n - 1] = (v[0] - 2.0 * v[n - 1] + v[n - 2]) * inv
    elif n >= 4:
        o[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * inv
        o[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) * inv
    else:
        o[0] = o[1]
        o[n - 1] = o[n - 2]
    return out
