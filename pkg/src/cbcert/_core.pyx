# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: batch polynomial evaluation and polynomial-field RK4."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite

cnp.import_array()


cdef inline void _eval_point(const long long[:, ::1] exps, const double[::1] coefs,
                             const long long[::1] offsets, const double* x, int n,
                             double* pw, int stride, double* out) noexcept nogil:
    # pw holds x_i**e at pw[i * stride + e]
    cdef int i, e, p, t
    cdef double term
    for i in range(n):
        pw[i * stride] = 1.0
        for e in range(1, stride):
            pw[i * stride + e] = pw[i * stride + e - 1] * x[i]
    for p in range(offsets.shape[0] - 1):
        out[p] = 0.0
        for t in range(offsets[p], offsets[p + 1]):
            term = coefs[t]
            for i in range(n):
                if exps[t, i]:
                    term *= pw[i * stride + exps[t, i]]
            out[p] += term


def eval_table(long long[:, ::1] exps, double[::1] coefs, long long[::1] offsets,
               double[:, ::1] pts):
    cdef Py_ssize_t n_pts = pts.shape[0]
    cdef int n = pts.shape[1]
    cdef int n_poly = offsets.shape[0] - 1
    cdef int stride = 1
    if exps.shape[0] > 0:
        stride = int(np.asarray(exps).max()) + 1
    out_arr = np.zeros((n_pts, n_poly))
    cdef double[:, ::1] out = out_arr
    pw_arr = np.empty(n * stride)
    cdef double[::1] pw = pw_arr
    cdef Py_ssize_t k
    with nogil:
        for k in range(n_pts):
            _eval_point(exps, coefs, offsets, &pts[k, 0], n, &pw[0], stride, &out[k, 0])
    return out_arr


def poly_eval(exps, coefs, pts):
    offsets = np.array([0, coefs.shape[0]], dtype=np.int64)
    return eval_table(exps, coefs, offsets, pts)[:, 0]


def rk4_field(long long[:, ::1] exps, double[::1] coefs, long long[::1] offsets,
              x0_in, double dt, Py_ssize_t steps, double bound):
    x0_arr = np.ascontiguousarray(np.atleast_2d(np.asarray(x0_in, dtype=float)))
    cdef double[:, ::1] x0 = x0_arr
    cdef Py_ssize_t n_traj = x0.shape[0]
    cdef int n = x0.shape[1]
    cdef int stride = 1
    if exps.shape[0] > 0:
        stride = int(np.asarray(exps).max()) + 1
    states_arr = np.full((n_traj, steps + 1, n), np.nan)
    cdef double[:, :, ::1] states = states_arr
    n_valid_arr = np.full(n_traj, steps + 1, dtype=np.int64)
    cdef long long[::1] n_valid = n_valid_arr
    work_arr = np.empty(n * stride + 6 * n)
    cdef double[::1] work = work_arr
    cdef double* pw = &work[0]
    cdef double* k1 = pw + n * stride
    cdef double* k2 = k1 + n
    cdef double* k3 = k2 + n
    cdef double* k4 = k3 + n
    cdef double* z = k4 + n
    cdef double* x = z + n
    cdef Py_ssize_t tr, k
    cdef int i
    cdef bint ok
    with nogil:
        for tr in range(n_traj):
            ok = True
            for i in range(n):
                x[i] = x0[tr, i]
                states[tr, 0, i] = x[i]
                if not isfinite(x[i]) or fabs(x[i]) > bound:
                    ok = False
            if not ok:
                n_valid[tr] = 1
                continue
            for k in range(steps):
                _eval_point(exps, coefs, offsets, x, n, pw, stride, k1)
                for i in range(n):
                    z[i] = x[i] + 0.5 * dt * k1[i]
                _eval_point(exps, coefs, offsets, z, n, pw, stride, k2)
                for i in range(n):
                    z[i] = x[i] + 0.5 * dt * k2[i]
                _eval_point(exps, coefs, offsets, z, n, pw, stride, k3)
                for i in range(n):
                    z[i] = x[i] + dt * k3[i]
                _eval_point(exps, coefs, offsets, z, n, pw, stride, k4)
                for i in range(n):
                    z[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    if not isfinite(z[i]) or fabs(z[i]) > bound:
                        ok = False
                if not ok:
                    n_valid[tr] = k + 1
                    break
                for i in range(n):
                    x[i] = z[i]
                    states[tr, k + 1, i] = x[i]
    return states_arr, n_valid_arr
