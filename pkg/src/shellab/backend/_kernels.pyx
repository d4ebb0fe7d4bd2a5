# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled shell-interaction kernels (batched bilinear operator + adjoint).

Semantics mirror ``pykern`` exactly: shape (batch, m) complex128 states,
``kk[i]`` = wavenumber of shell i for i = 0..m+1, out-of-range components
treated as zero.
"""

import numpy as np

cimport numpy as cnp  # noqa: F401  (needed for the numpy C API)

ctypedef double complex cplx

cdef extern from "complex.h" nogil:
    cplx conj(cplx z)

GOY = 0
SABRA = 1


cdef inline cplx _get(const cplx[:, ::1] x, Py_ssize_t ib, Py_ssize_t n, Py_ssize_t m) nogil:
    # n is the 1-based shell index; anything outside 1..m is zero
    if n < 1 or n > m:
        return 0
    return x[ib, n - 1]


def bilinear(int variant, double a, double b, const double[::1] kk,
             const cplx[:, ::1] u, const cplx[:, ::1] v):
    cdef Py_ssize_t batch = u.shape[0], m = u.shape[1], ib, n
    cdef cplx s
    out_arr = np.empty((batch, m), dtype=np.complex128)
    cdef cplx[:, ::1] out = out_arr
    with nogil:
        for ib in range(batch):
            for n in range(1, m + 1):
                if variant == 0:
                    s = (a * kk[n + 1] * conj(_get(u, ib, n + 1, m)) * conj(_get(v, ib, n + 2, m))
                         + b * kk[n] * conj(_get(u, ib, n - 1, m)) * conj(_get(v, ib, n + 1, m))
                         - a * kk[n - 1] * conj(_get(u, ib, n - 1, m)) * conj(_get(v, ib, n - 2, m))
                         - b * kk[n - 1] * conj(_get(u, ib, n - 2, m)) * conj(_get(v, ib, n - 1, m)))
                else:
                    s = (a * kk[n + 1] * conj(_get(u, ib, n + 1, m)) * _get(v, ib, n + 2, m)
                         + b * kk[n] * conj(_get(u, ib, n - 1, m)) * _get(v, ib, n + 1, m)
                         + a * kk[n - 1] * _get(u, ib, n - 1, m) * _get(v, ib, n - 2, m)
                         + b * kk[n - 1] * _get(u, ib, n - 2, m) * _get(v, ib, n - 1, m))
                out[ib, n - 1] = -1j * s
    return out_arr


def bilinear_first_adjoint(int variant, double a, double b, const double[::1] kk,
                           const cplx[:, ::1] u, const cplx[:, ::1] w):
    cdef Py_ssize_t batch = u.shape[0], m = u.shape[1], ib, p
    cdef cplx s
    out_arr = np.empty((batch, m), dtype=np.complex128)
    cdef cplx[:, ::1] out = out_arr
    with nogil:
        for ib in range(batch):
            for p in range(1, m + 1):
                if variant == 0:
                    s = (a * kk[p] * conj(_get(u, ib, p + 1, m)) * conj(_get(w, ib, p - 1, m))
                         + b * kk[p + 1] * conj(_get(u, ib, p + 2, m)) * conj(_get(w, ib, p + 1, m))
                         - a * kk[p] * conj(_get(u, ib, p - 1, m)) * conj(_get(w, ib, p + 1, m))
                         - b * kk[p + 1] * conj(_get(u, ib, p + 1, m)) * conj(_get(w, ib, p + 2, m)))
                else:
                    s = (a * kk[p] * _get(u, ib, p + 1, m) * conj(_get(w, ib, p - 1, m))
                         + b * kk[p + 1] * _get(u, ib, p + 2, m) * conj(_get(w, ib, p + 1, m))
                         - a * kk[p] * conj(_get(u, ib, p - 1, m)) * _get(w, ib, p + 1, m)
                         - b * kk[p + 1] * conj(_get(u, ib, p + 1, m)) * _get(w, ib, p + 2, m))
                out[ib, p - 1] = -1j * s
    return out_arr
