# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-trial detector kernels (native backend).

Same contract as ``cesdet._kernels.fallback.detector_stats``: tight C loops
over trials with small-matrix Cholesky factorizations, no per-trial Python
overhead.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

ctypedef double complex c128

KELLY_ARG_MIN = 1e-300


cdef int _chol(c128[:, ::1] a, int n) noexcept nogil:
    """In-place lower Cholesky of the Hermitian matrix in a; -1 if not PD."""
    cdef int i, j, k
    cdef double d
    cdef c128 s
    for j in range(n):
        d = a[j, j].real
        for k in range(j):
            d -= a[j, k].real * a[j, k].real + a[j, k].imag * a[j, k].imag
        if d <= 0.0 or d != d:
            return -1
        d = sqrt(d)
        a[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k].conjugate()
            a[i, j] = s / d
    return 0


cdef void _chol_solve(c128[:, ::1] l, c128[::1] b, c128[::1] x, int n) noexcept nogil:
    """Solve L L^H x = b given the lower factor L."""
    cdef int i, k
    cdef c128 s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= l[i, k] * x[k]
        x[i] = s / l[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= l[k, i].conjugate() * x[k]
        x[i] = s / l[i, i]


cdef double _chol_logdet(c128[:, ::1] l, int n) noexcept nogil:
    cdef int i
    cdef double s = 0.0
    for i in range(n):
        s += log(l[i, i].real)
    return 2.0 * s


def detector_stats(x1, x0, v,
                   bint want_mglrt=False, bint want_kelly=False,
                   bint want_wald_t1=False, bint want_wald_s0=False,
                   bint want_amf=False):
    """Per-trial detector statistics for stacked datasets.

    x1: (T, M1, N) primary, x0: (T, M0, N) secondary, v: (N,) steering.
    Returns a dict with one float64 array of length T per requested
    statistic plus 'kelly_clamped', the count of clamped Kelly logs.
    """
    cdef cnp.ndarray[c128, ndim=3] x1a = np.ascontiguousarray(x1, dtype=np.complex128)
    cdef cnp.ndarray[c128, ndim=3] x0a = np.ascontiguousarray(x0, dtype=np.complex128)
    cdef cnp.ndarray[c128, ndim=1] va = np.ascontiguousarray(v, dtype=np.complex128).ravel()

    cdef Py_ssize_t trials = x1a.shape[0]
    cdef int m1 = <int> x1a.shape[1]
    cdef int n = <int> x1a.shape[2]
    cdef int m0 = <int> x0a.shape[1]
    cdef int m = m1 + m0
    if x0a.shape[2] != n or va.shape[0] != n:
        raise ValueError("primary/secondary/steering dimensions disagree")
    if (want_kelly or want_amf) and m1 != 1:
        raise ValueError("kelly/amf require exactly one primary vector")

    out = {}
    cdef double[::1] r_mglrt = None, r_kelly = None, r_wt1 = None, r_ws0 = None, r_amf = None
    if want_mglrt:
        out["mglrt"] = np.empty(trials); r_mglrt = out["mglrt"]
    if want_kelly:
        out["kelly"] = np.empty(trials); r_kelly = out["kelly"]
    if want_wald_t1:
        out["wald_t1"] = np.empty(trials); r_wt1 = out["wald_t1"]
    if want_wald_s0:
        out["wald_s0"] = np.empty(trials); r_ws0 = out["wald_s0"]
    if want_amf:
        out["amf"] = np.empty(trials); r_amf = out["amf"]

    cdef c128[:, :, ::1] X1 = x1a
    cdef c128[:, :, ::1] X0 = x0a
    cdef c128[::1] V = va

    # Scratch (reused across trials).
    cdef c128[:, ::1] s0 = np.empty((n, n), dtype=np.complex128)
    cdef c128[:, ::1] l0 = np.empty((n, n), dtype=np.complex128)
    cdef c128[:, ::1] fmat = np.empty((n, n), dtype=np.complex128)
    cdef c128[:, ::1] gmat = np.empty((m1, m1), dtype=np.complex128)
    cdef c128[:, ::1] wcols = np.empty((m1, n), dtype=np.complex128)
    cdef c128[::1] u = np.empty(n, dtype=np.complex128)
    cdef c128[::1] y = np.empty(n, dtype=np.complex128)
    cdef c128[::1] p = np.empty(m1, dtype=np.complex128)

    cdef Py_ssize_t t
    cdef int i, j, k, a, b
    cdef int clamped = 0
    cdef bint need_f1 = want_wald_t1 or (want_mglrt and m1 >= n)
    cdef bint need_wcols = want_kelly or (want_mglrt and m1 < n)
    cdef double qvv, xsx, arg, ld0, ld1, qt1, stat
    cdef c128 s, alpha, psum
    cdef double absp2, abspsum2

    for t in range(trials):
        # S0 = sum of secondary outer products (lower triangle suffices).
        for i in range(n):
            for j in range(i + 1):
                s = 0
                for k in range(m0):
                    s += X0[t, k, i] * X0[t, k, j].conjugate()
                s0[i, j] = s
        for i in range(n):
            for j in range(i + 1):
                l0[i, j] = s0[i, j]
            for j in range(i + 1, n):
                l0[i, j] = s0[j, i].conjugate()
        if _chol(l0, n) != 0:
            _raise_not_pd()

        _chol_solve(l0, V, u, n)
        qvv = 0.0
        for i in range(n):
            qvv += (V[i].conjugate() * u[i]).real
        psum = 0
        for k in range(m1):
            s = 0
            for i in range(n):
                s += u[i].conjugate() * X1[t, k, i]
            p[k] = s
            psum += s
        alpha = psum / (m1 * qvv)

        if need_wcols:
            for k in range(m1):
                for i in range(n):
                    y[i] = X1[t, k, i]
                _chol_solve(l0, y, y, n)
                for i in range(n):
                    wcols[k, i] = y[i]

        if want_mglrt:
            if m1 < n:
                # G = X1^H S0^{-1} X1, then I + G
                for a in range(m1):
                    for b in range(m1):
                        s = 0
                        for i in range(n):
                            s += X1[t, a, i].conjugate() * wcols[b, i]
                        gmat[a, b] = s + (1.0 if a == b else 0.0)
                if _chol(gmat, m1) != 0:
                    _raise_not_pd()
                ld0 = _chol_logdet(gmat, m1)
                for a in range(m1):
                    for b in range(m1):
                        s = 0
                        for i in range(n):
                            s += (X1[t, a, i] - alpha * V[i]).conjugate() \
                                 * (wcols[b, i] - alpha * u[i])
                        gmat[a, b] = s + (1.0 if a == b else 0.0)
                if _chol(gmat, m1) != 0:
                    _raise_not_pd()
                ld1 = _chol_logdet(gmat, m1)
            else:
                # F0 = S0 + X1 X1^H
                for i in range(n):
                    for j in range(i + 1):
                        s = s0[i, j]
                        for k in range(m1):
                            s += X1[t, k, i] * X1[t, k, j].conjugate()
                        fmat[i, j] = s
                    for j in range(i + 1, n):
                        fmat[i, j] = 0
                _fill_upper(fmat, n)
                if _chol(fmat, n) != 0:
                    _raise_not_pd()
                ld0 = _chol_logdet(fmat, n)
                _build_f1(s0, X1, V, alpha, fmat, t, m1, n)
                if _chol(fmat, n) != 0:
                    _raise_not_pd()
                ld1 = _chol_logdet(fmat, n)
            stat = 2.0 * m * (ld0 - ld1)
            r_mglrt[t] = stat if stat > 0.0 else 0.0

        if want_kelly:
            xsx = 0.0
            for i in range(n):
                xsx += (X1[t, 0, i].conjugate() * wcols[0, i]).real
            absp2 = p[0].real * p[0].real + p[0].imag * p[0].imag
            arg = 1.0 - absp2 / (qvv * (1.0 + xsx))
            if arg < KELLY_ARG_MIN:
                clamped += 1
                arg = KELLY_ARG_MIN
            stat = -2.0 * (m0 + 1) * log(arg)
            r_kelly[t] = stat if stat > 0.0 else 0.0

        abspsum2 = psum.real * psum.real + psum.imag * psum.imag

        if want_wald_t1:
            _build_f1(s0, X1, V, alpha, fmat, t, m1, n)
            if _chol(fmat, n) != 0:
                _raise_not_pd()
            _chol_solve(fmat, V, y, n)
            qt1 = 0.0
            for i in range(n):
                qt1 += (V[i].conjugate() * y[i]).real
            qt1 *= m                      # v^H T1^{-1} v with T1 = F1 / M
            stat = 2.0 * qt1 * abspsum2 / (m1 * qvv * qvv)
            r_wt1[t] = stat if stat > 0.0 else 0.0

        if want_wald_s0:
            stat = 2.0 * m0 * abspsum2 / (m1 * qvv)
            r_ws0[t] = stat if stat > 0.0 else 0.0

        if want_amf:
            absp2 = p[0].real * p[0].real + p[0].imag * p[0].imag
            stat = 2.0 * m0 * absp2 / qvv
            r_amf[t] = stat if stat > 0.0 else 0.0

    out["kelly_clamped"] = clamped
    return out


cdef void _build_f1(c128[:, ::1] s0, c128[:, :, ::1] X1, c128[::1] V,
                    c128 alpha, c128[:, ::1] dest, Py_ssize_t t,
                    int m1, int n) noexcept nogil:
    """dest = S0 + sum_m (x_m - alpha v)(x_m - alpha v)^H."""
    cdef int i, j, k
    cdef c128 s, ri, rj
    for i in range(n):
        for j in range(i + 1):
            s = s0[i, j]
            for k in range(m1):
                ri = X1[t, k, i] - alpha * V[i]
                rj = X1[t, k, j] - alpha * V[j]
                s += ri * rj.conjugate()
            dest[i, j] = s
    _fill_upper(dest, n)


cdef void _fill_upper(c128[:, ::1] a, int n) noexcept nogil:
    cdef int i, j
    for i in range(n):
        for j in range(i + 1, n):
            a[i, j] = a[j, i].conjugate()


cdef void _raise_not_pd() except *:
    from cesdet.linalg import NotPositiveDefiniteError
    raise NotPositiveDefiniteError("matrix is not positive definite")
