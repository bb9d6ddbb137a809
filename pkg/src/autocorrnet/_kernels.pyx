# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics must match ``_kernels_py`` exactly."""
import numpy as np
from libc.math cimport sqrt


def ar1_filter(const double[::1] innov, double rho):
    """out[0] = innov[0]; out[t] = rho * out[t-1] + innov[t]."""
    cdef Py_ssize_t n = innov.shape[0]
    cdef Py_ssize_t t
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    if n == 0:
        return out
    o[0] = innov[0]
    for t in range(1, n):
        o[t] = rho * o[t - 1] + innov[t]
    return out


def lag_sums(const double[::1] e):
    """One pass over e: (sum e_t e_{t-1}, sum_{t<T-1} e_t^2, sum (e_t - e_{t-1})^2, sum e_t^2)."""
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t t
    cdef double cross = 0.0, head = 0.0, diff = 0.0, total = 0.0, d
    if n == 0:
        return 0.0, 0.0, 0.0, 0.0
    for t in range(1, n):
        cross += e[t] * e[t - 1]
        head += e[t - 1] * e[t - 1]
        d = e[t] - e[t - 1]
        diff += d * d
    total = head + e[n - 1] * e[n - 1]
    return cross, head, diff, total


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    """In-place bias-corrected Adam step on flat float64 buffers."""
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - beta1
    cdef double c2 = 1.0 - beta2
    for i in range(n):
        m[i] = beta1 * m[i] + c1 * g[i]
        v[i] = beta2 * v[i] + c2 * g[i] * g[i]
        p[i] = p[i] - lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
