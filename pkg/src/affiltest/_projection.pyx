# cython: language_level=3
"""Compiled cone projection kernel.

Same contract and active-set pivoting rules as ``_projection_py``; that
module is the authoritative description.  This one exists because the
mixture-weight simulation calls the projection about 1e5 times per test
and the all-Python inner loop dominates the runtime.
"""

import numpy as np

from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

IMPLEMENTATION = "compiled"

cdef double _REL_TOL = 1e-12
cdef double _DROP_TOL = 1e-14


cdef int _chol(double* a, int m) nogil:
    # in-place lower Cholesky of a row-major m x m matrix
    cdef int i, jc, t
    cdef double s
    for i in range(m):
        for jc in range(i + 1):
            s = a[i * m + jc]
            for t in range(jc):
                s -= a[i * m + t] * a[jc * m + t]
            if i == jc:
                if s <= 0.0:
                    return -1
                a[i * m + i] = sqrt(s)
            else:
                a[i * m + jc] = s / a[jc * m + jc]
    return 0


cdef void _chol_solve(double* l, double* x, int m) nogil:
    # solve L L' x = x in place, L lower triangular
    cdef int i, t
    cdef double s
    for i in range(m):
        s = x[i]
        for t in range(i):
            s -= l[i * m + t] * x[t]
        x[i] = s / l[i * m + i]
    for i in range(m - 1, -1, -1):
        s = x[i]
        for t in range(i + 1, m):
            s -= l[t * m + i] * x[t]
        x[i] = s / l[i * m + i]


cdef int _support_size(const double* w, const double* q, int j,
                       unsigned char* passive, double* b, int* idx,
                       double* sub, double* sol) nogil:
    cdef int i, p, t, m, outer, best
    cdef double tol, g, gbest, s, alpha, step, cur, mx
    mx = 1.0
    for i in range(j):
        s = q[i] if q[i] >= 0.0 else -q[i]
        if s > mx:
            mx = s
    tol = _REL_TOL * mx
    for i in range(j):
        passive[i] = 0
        b[i] = 0.0
    for outer in range(10 * j + 10):
        # most negative gradient among clamped coordinates
        best = -1
        gbest = -tol
        for i in range(j):
            if passive[i]:
                continue
            g = -q[i]
            for p in range(j):
                if passive[p]:
                    g += w[i * j + p] * b[p]
            if g < gbest:
                gbest = g
                best = i
        if best < 0:
            break
        passive[best] = 1
        while True:
            m = 0
            for i in range(j):
                if passive[i]:
                    idx[m] = i
                    m += 1
            if m == 0:
                break
            for p in range(m):
                for t in range(m):
                    sub[p * m + t] = w[idx[p] * j + idx[t]]
                sol[p] = q[idx[p]]
            if _chol(sub, m) != 0:
                # numerically non-PD submatrix; nudge the diagonal once
                for p in range(m):
                    for t in range(m):
                        sub[p * m + t] = w[idx[p] * j + idx[t]]
                    sub[p * m + p] += 1e-12 * mx
                    sol[p] = q[idx[p]]
                if _chol(sub, m) != 0:
                    return m
            _chol_solve(sub, sol, m)
            s = sol[0]
            for p in range(1, m):
                if sol[p] < s:
                    s = sol[p]
            if s > 0.0:
                for i in range(j):
                    b[i] = 0.0
                for p in range(m):
                    b[idx[p]] = sol[p]
                break
            alpha = INFINITY
            for p in range(m):
                if sol[p] <= 0.0:
                    cur = b[idx[p]]
                    step = cur / (cur - sol[p])
                    if step < alpha:
                        alpha = step
            for p in range(m):
                cur = b[idx[p]] + alpha * (sol[p] - b[idx[p]])
                if cur < _DROP_TOL:
                    cur = 0.0
                b[idx[p]] = cur
            for i in range(j):
                if passive[i] and b[i] == 0.0:
                    passive[i] = 0
    m = 0
    for i in range(j):
        if passive[i]:
            m += 1
    return m


def binding_counts(w, z):
    """Number of zero (binding) coordinates of each projected draw.

    See ``_projection_py.binding_counts``.
    """
    w_arr = np.ascontiguousarray(w, dtype=np.float64)
    z_arr = np.ascontiguousarray(z, dtype=np.float64)
    if w_arr.ndim != 2 or w_arr.shape[0] != w_arr.shape[1]:
        raise ValueError("w must be a square matrix")
    if z_arr.ndim != 2 or z_arr.shape[1] != w_arr.shape[0]:
        raise ValueError(f"z must have shape (n, {w_arr.shape[0]})")
    cdef Py_ssize_t n = z_arr.shape[0]
    cdef int j = w_arr.shape[0]
    out = np.zeros(n, dtype=np.int64)
    if j == 0 or n == 0:
        return out
    q_all = np.ascontiguousarray(z_arr @ w_arr.T)
    cdef const double[:, ::1] wv = w_arr
    cdef const double[:, ::1] qv = q_all
    cdef long long[::1] ov = out
    cdef unsigned char* passive = <unsigned char*> malloc(j * sizeof(unsigned char))
    cdef double* b = <double*> malloc(j * sizeof(double))
    cdef int* idx = <int*> malloc(j * sizeof(int))
    cdef double* sub = <double*> malloc(j * j * sizeof(double))
    cdef double* sol = <double*> malloc(j * sizeof(double))
    cdef Py_ssize_t r
    if not (passive and b and idx and sub and sol):
        free(passive); free(b); free(idx); free(sub); free(sol)
        raise MemoryError()
    try:
        with nogil:
            for r in range(n):
                ov[r] = j - _support_size(&wv[0, 0], &qv[r, 0], j,
                                          passive, b, idx, sub, sol)
    finally:
        free(passive); free(b); free(idx); free(sub); free(sol)
    return out
