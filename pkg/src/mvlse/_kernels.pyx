# cython: language_level=3
"""Compiled Euler-Maruyama kernel for the scalar example model."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs

cnp.import_array()


cdef inline double _own(int code, double x) noexcept nogil:
    if code == 1:
        return sin(x)
    return 0.0


cdef inline double _other(int code, double x) noexcept nogil:
    if code == 1:
        return cos(x)
    if code == 2:
        return x
    return 0.0


def em_example(hist, double theta1, double theta2, double eps, double delta, dB, int b0_code):
    """See ``mvlse._kernels_py.em_example``."""
    cdef const double[::1] h = np.ascontiguousarray(hist, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(dB, dtype=np.float64)
    cdef Py_ssize_t N = w.shape[0]
    cdef Py_ssize_t n = w.shape[1]
    cdef Py_ssize_t M = h.shape[0] - 1
    out = np.empty((N, M + 1 + n), dtype=np.float64)
    cdef double[:, ::1] p = out
    cdef Py_ssize_t i, j, k
    cdef double acc, mean_other, cur, drift
    for i in range(N):
        for j in range(M + 1):
            p[i, j] = h[j]
    with nogil:
        for k in range(n):
            acc = 0.0
            for i in range(N):
                acc = acc + _other(b0_code, p[i, k + M])
            mean_other = acc / N
            for i in range(N):
                cur = p[i, k + M]
                drift = theta1 + theta2 * (_own(b0_code, p[i, k]) + mean_other)
                p[i, k + M + 1] = cur + drift * delta + eps * (1.0 + fabs(cur)) * w[i, k]
    return out
