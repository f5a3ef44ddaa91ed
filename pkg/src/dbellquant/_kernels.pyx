# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``.

Same signatures and semantics; loops are fused so one LTDB iteration makes
four passes over each block without temporaries the size of ``W``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef enum:
    _NONE = 0
    _FROZEN = 1
    _TRACKED = 2

GRAD_NONE = _NONE
GRAD_FROZEN = _FROZEN
GRAD_TRACKED = _TRACKED


cdef inline double _sgn(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def block_stats(const double[:, ::1] Wt, Py_ssize_t block_size):
    cdef Py_ssize_t rows = Wt.shape[0], cols = Wt.shape[1]
    cdef Py_ssize_t nb = (rows + block_size - 1) // block_size
    beta_arr = np.zeros((nb, cols))
    alpha_arr = np.zeros((nb, cols))
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef Py_ssize_t b, s, e, i, j
    with nogil:
        for b in range(nb):
            s = b * block_size
            e = min(s + block_size, rows)
            for i in range(s, e):
                for j in range(cols):
                    beta[b, j] += Wt[i, j]
            for j in range(cols):
                beta[b, j] /= (e - s)
            for i in range(s, e):
                for j in range(cols):
                    alpha[b, j] += fabs(Wt[i, j] - beta[b, j])
            for j in range(cols):
                alpha[b, j] /= (e - s)
    return beta_arr, alpha_arr


def dual_target(const double[:, ::1] W, const double[::1] T, Py_ssize_t block_size,
                double floor, bint l2, int grad_mode):
    cdef Py_ssize_t rows = W.shape[0], cols = W.shape[1]
    cdef double n = <double>(rows * cols)
    cdef double[::1] beta = np.empty(cols)
    cdef double[::1] alpha = np.empty(cols)
    cdef double[::1] ssum = np.empty(cols)
    cdef double[::1] C1 = np.empty(cols)
    cdef double[::1] C2 = np.empty(cols)
    grad_arr = np.zeros(rows) if grad_mode != GRAD_NONE else None
    cdef double[::1] grad
    if grad_arr is not None:
        grad = grad_arr
    cdef double dtmd = 0.0, dtnp = 0.0
    cdef double x, dev, m1, m2, d1, d2, m, d, am, den, diff, direct, c, dal, g, rr, q
    cdef bint upper
    cdef Py_ssize_t s, e, i, j

    with nogil:
        s = 0
        while s < rows:
            e = min(s + block_size, rows)
            rr = <double>(e - s)
            for j in range(cols):
                beta[j] = 0.0
                alpha[j] = 0.0
                ssum[j] = 0.0
                C1[j] = 0.0
                C2[j] = 0.0
            for i in range(s, e):
                for j in range(cols):
                    beta[j] += T[i] * W[i, j]
            for j in range(cols):
                beta[j] /= rr
            for i in range(s, e):
                for j in range(cols):
                    dev = T[i] * W[i, j] - beta[j]
                    alpha[j] += fabs(dev)
                    ssum[j] += _sgn(dev)
            for j in range(cols):
                alpha[j] /= rr

            # losses and the per-column center sensitivities
            for i in range(s, e):
                for j in range(cols):
                    x = T[i] * W[i, j]
                    m1 = beta[j] - alpha[j]
                    m2 = beta[j] + alpha[j]
                    d1 = fabs(x - m1)
                    d2 = fabs(x - m2)
                    upper = d2 < d1
                    if upper:
                        m = m2
                        d = d2
                    else:
                        m = m1
                        d = d1
                    am = fabs(m)
                    den = am if am > floor else floor
                    dtmd += d
                    q = d / den
                    if l2:
                        dtnp += q * q
                    else:
                        dtnp += q
                    if grad_mode == _TRACKED:
                        diff = x - m
                        if l2:
                            direct = 2.0 * diff / (den * den)
                            c = -direct
                            if am > floor:
                                c -= 2.0 * diff * diff * _sgn(m) / (den * den * den)
                        else:
                            direct = _sgn(diff) / den
                            c = -direct
                            if am > floor:
                                c -= d * _sgn(m) / (den * den)
                        if upper:
                            C2[j] += c
                        else:
                            C1[j] += c

            if grad_mode != _NONE:
                for i in range(s, e):
                    g = 0.0
                    for j in range(cols):
                        x = T[i] * W[i, j]
                        m1 = beta[j] - alpha[j]
                        m2 = beta[j] + alpha[j]
                        d1 = fabs(x - m1)
                        d2 = fabs(x - m2)
                        upper = d2 < d1
                        m = m2 if upper else m1
                        am = fabs(m)
                        den = am if am > floor else floor
                        diff = x - m
                        if l2:
                            direct = 2.0 * diff / (den * den)
                        else:
                            direct = _sgn(diff) / den
                        if grad_mode == _TRACKED:
                            dal = (_sgn(x - beta[j]) - ssum[j] / rr) / rr
                            direct = direct + C1[j] * (1.0 / rr - dal) + C2[j] * (1.0 / rr + dal)
                        g += direct * W[i, j]
                    grad[i] = g / n
            s = e
    return dtmd / n, dtnp / n, grad_arr
