# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Mirrors ``_pykernels`` (same bracketing, same fixed iteration counts) so
the two backends agree to the last few ulps; the NumPy module is the
reference in the backend equivalence tests.
"""

import numpy as np

from libc.math cimport exp, log, pow, fabs, lgamma, tgamma
from scipy.special.cython_special cimport exp1, gammaincc

BACKEND_NAME = "cython"

cdef double _LOG_LO = log(1e-300)
cdef int _CF_ITER = 64
cdef int _BISECT_ITER = 64


cdef double _upper_gamma_cf(double s, double x) noexcept nogil:
    cdef double tiny = 1e-300
    cdef double b = x + 1.0 - s
    cdef double c = 1.0 / tiny
    cdef double d = 1.0 / b
    cdef double h = d
    cdef double an, delta
    cdef int i
    for i in range(1, _CF_ITER + 1):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        if fabs(d) < tiny:
            d = tiny
        c = b + an / c
        if fabs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h = h * (d * c)
    return exp(-x + s * log(x)) * h


cdef double _upper_gamma_negative(double s, double x) noexcept nogil:
    cdef double g1
    if x < 2.0:
        g1 = tgamma(s + 1.0) * gammaincc(s + 1.0, x)
        return (pow(x, s) * exp(-x) - g1) / (-s)
    return _upper_gamma_cf(s, x)


cdef double _tail(double x, double a, double sigma, double tau) noexcept nogil:
    cdef double pref
    if sigma == 0.0:
        return a * exp1(tau * x)
    if tau == 0.0:
        return a / tgamma(1.0 - sigma) * pow(x, -sigma) / sigma
    pref = a / tgamma(1.0 - sigma) * pow(tau, sigma)
    return pref * _upper_gamma_negative(-sigma, tau * x)


def invert_tail_mass(double[::1] eta, double a, double sigma, double tau):
    cdef Py_ssize_t n = eta.shape[0]
    out = np.empty(n, dtype=np.float64)
    if n == 0:
        return out
    cdef double[::1] ov = out
    cdef double c, eta_min, eta_max, hi0, lo, hi, mid
    cdef Py_ssize_t i
    cdef int it
    if tau == 0.0:
        c = a / (tgamma(1.0 - sigma) * sigma)
        with nogil:
            for i in range(n):
                ov[i] = pow(c / eta[i], 1.0 / sigma)
        return out
    eta_min = eta[0]
    eta_max = eta[0]
    for i in range(1, n):
        if eta[i] < eta_min:
            eta_min = eta[i]
        if eta[i] > eta_max:
            eta_max = eta[i]
    if eta_max > _tail(1e-300, a, sigma, tau):
        raise ArithmeticError("tail-mass inversion target not bracketed "
                              "above 1e-300")
    hi0 = 1.0
    for it in range(1100):
        if _tail(hi0, a, sigma, tau) < eta_min:
            break
        hi0 *= 2.0
    else:
        raise ArithmeticError("tail-mass inversion: no upper bracket")
    hi0 = log(hi0)
    with nogil:
        for i in range(n):
            lo = _LOG_LO
            hi = hi0
            for it in range(_BISECT_ITER):
                mid = 0.5 * (lo + hi)
                if _tail(exp(mid), a, sigma, tau) >= eta[i]:
                    lo = mid
                else:
                    hi = mid
            ov[i] = exp(0.5 * (lo + hi))
    return out


def sample_labels(double[::1] y, double[::1] phi, double[::1] log_s,
                  double sigma_f_sq, double[::1] u):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t m = phi.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long[::1] ov = out
    cdef double inv2 = 0.5 / sigma_f_sq
    cdef double best, lw, d, tot, thr, acc
    cdef Py_ssize_t i, h, lab
    with nogil:
        for i in range(n):
            best = -1e308
            for h in range(m):
                d = y[i] - phi[h]
                lw = log_s[h] - d * d * inv2
                if lw > best:
                    best = lw
            tot = 0.0
            for h in range(m):
                d = y[i] - phi[h]
                tot += exp(log_s[h] - d * d * inv2 - best)
            thr = u[i] * tot
            acc = 0.0
            lab = m - 1
            for h in range(m):
                d = y[i] - phi[h]
                acc += exp(log_s[h] - d * d * inv2 - best)
                if acc >= thr:
                    lab = h
                    break
            ov[i] = lab
    return out
