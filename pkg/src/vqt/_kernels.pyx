# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, M_PI
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()


def wigner_grid(double complex[:, ::1] rho, double[::1] q, double[::1] p):
    cdef Py_ssize_t dim = rho.shape[0]
    cdef Py_ssize_t nq = q.shape[0], np_ = p.shape[0]
    cdef Py_ssize_t i, j, m, n
    # complex recurrence written out in real arithmetic
    cdef double ar, ai, tr, ti, t2r, t2i, acc, s
    cdef double[::1] sq = np.sqrt(np.arange(max(dim, 1), dtype=float))
    cdef double[::1] isq = np.zeros(max(dim, 1), dtype=float)
    cdef double[:, ::1] rr = np.ascontiguousarray(np.real(rho))
    cdef double[:, ::1] ri = np.ascontiguousarray(np.imag(rho))
    cdef double[::1] wr = np.empty(max(dim, 1), dtype=float)
    cdef double[::1] wi = np.empty(max(dim, 1), dtype=float)
    out = np.empty((np_, nq), dtype=float)
    cdef double[:, ::1] w = out
    for n in range(1, dim):
        isq[n] = 1.0 / sq[n]
    for j in range(np_):
        for i in range(nq):
            ar = q[i] * sqrt(0.5)
            ai = p[j] * sqrt(0.5)
            wr[0] = exp(-2.0 * (ar * ar + ai * ai)) / M_PI
            wi[0] = 0.0
            acc = rr[0, 0] * wr[0]
            for n in range(1, dim):
                s = 2.0 * isq[n]
                wr[n] = s * (ar * wr[n - 1] - ai * wi[n - 1])
                wi[n] = s * (ar * wi[n - 1] + ai * wr[n - 1])
                acc += 2.0 * (rr[0, n] * wr[n] - ri[0, n] * wi[n])
            for m in range(1, dim):
                tr = wr[m]
                ti = wi[m]
                # conj(alpha) * temp
                wr[m] = (2.0 * (ar * tr + ai * ti) - sq[m] * wr[m - 1]) * isq[m]
                wi[m] = (2.0 * (ar * ti - ai * tr) - sq[m] * wi[m - 1]) * isq[m]
                acc += rr[m, m] * wr[m] - ri[m, m] * wi[m]
                for n in range(m + 1, dim):
                    t2r = (2.0 * (ar * wr[n - 1] - ai * wi[n - 1]) - sq[m] * tr) * isq[n]
                    t2i = (2.0 * (ar * wi[n - 1] + ai * wr[n - 1]) - sq[m] * ti) * isq[n]
                    tr = wr[n]
                    ti = wi[n]
                    wr[n] = t2r
                    wi[n] = t2i
                    acc += 2.0 * (rr[m, n] * t2r - ri[m, n] * t2i)
            w[j, i] = acc
    return out


def ecd_apply(double complex[:, :, :, :, ::1] psi, double complex[:, ::1] d,
              double complex[:, :, :, :, ::1] out):
    """Gather each qubit half into a ``(c, L*X*Y)`` panel, one ZGEMM per half, scatter back."""
    cdef Py_ssize_t L = psi.shape[0], c = psi.shape[1], X = psi.shape[2], Y = psi.shape[4]
    cdef Py_ssize_t l, n, x, y
    cdef int q
    cdef int ncols = <int>(L * X * Y), ci = <int>c
    cdef double complex one = 1.0, zero = 0.0
    cdef double complex[:, ::1] dh = np.ascontiguousarray(np.conj(np.asarray(d)).T)
    cdef double complex[:, ::1] dc = np.ascontiguousarray(d)
    cdef double complex[:, ::1] panel = np.empty((c, L * X * Y), dtype=complex)
    cdef double complex[:, ::1] res = np.empty((c, L * X * Y), dtype=complex)
    cdef double complex* mat
    cdef double complex* src
    cdef double complex* dst
    if ncols == 0 or c == 0:
        return np.asarray(out)
    for q in range(2):
        with nogil:
            for l in range(L):
                for n in range(c):
                    src = &psi[l, n, 0, q, 0]
                    dst = &panel[n, l * X * Y]
                    for x in range(X):
                        for y in range(Y):
                            dst[x * Y + y] = src[2 * x * Y + y]
        # row-major res = M @ panel is column-major res^T = panel^T M^T
        mat = &dc[0, 0] if q == 0 else &dh[0, 0]
        zgemm("N", "N", &ncols, &ci, &ci, &one, &panel[0, 0], &ncols, mat, &ci, &zero, &res[0, 0], &ncols)
        with nogil:
            for l in range(L):
                for n in range(c):
                    dst = &out[l, n, 0, 1 - q, 0]
                    src = &res[n, l * X * Y]
                    for x in range(X):
                        for y in range(Y):
                            dst[2 * x * Y + y] = src[x * Y + y]
    return np.asarray(out)


def qubit_apply(double complex[:, :, ::1] psi, double complex[:, ::1] u,
                double complex[:, :, ::1] out):
    cdef Py_ssize_t L = psi.shape[0], Y = psi.shape[2]
    cdef Py_ssize_t l, y
    cdef double complex a0, a1
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    for l in range(L):
        for y in range(Y):
            a0 = psi[l, 0, y]
            a1 = psi[l, 1, y]
            out[l, 0, y] = u00 * a0 + u01 * a1
            out[l, 1, y] = u10 * a0 + u11 * a1
    return np.asarray(out)
