# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the routines in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def jacobi_eigh(a, double tol, int max_sweeps):
    cdef Py_ssize_t n = a.shape[0]
    cdef double complex[:, ::1] A = np.array(a, dtype=np.complex128, order="C")
    Vn = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] V = Vn
    cdef Py_ssize_t i, j, k, p, q
    cdef double scale = 0.0, s2, mag, tau, t, c, s, off
    cdef double complex apq, e, ec, akp, akq, apk, aqk
    cdef int sweeps = 0

    for i in range(n):
        for j in range(n):
            scale += A[i, j].real * A[i, j].real + A[i, j].imag * A[i, j].imag
    scale = sqrt(scale)
    if scale == 0.0:
        return np.zeros(n), Vn, 0, 0.0

    s2 = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s2 += A[i, j].real * A[i, j].real + A[i, j].imag * A[i, j].imag
    off = sqrt(2.0 * s2) / scale

    while off > tol and sweeps < max_sweeps:
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = sqrt(apq.real * apq.real + apq.imag * apq.imag)
                if mag <= 1e-300 or mag < 1e-18 * scale:
                    continue
                e = apq / mag
                ec = e.conjugate()
                tau = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * ec * akq
                    A[k, q] = s * akp + c * ec * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * e * aqk
                    A[q, k] = s * apk + c * e * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                for k in range(n):
                    akp = V[k, p]
                    akq = V[k, q]
                    V[k, p] = c * akp - s * ec * akq
                    V[k, q] = s * akp + c * ec * akq
        s2 = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                s2 += A[i, j].real * A[i, j].real + A[i, j].imag * A[i, j].imag
        off = sqrt(2.0 * s2) / scale

    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i].real
    order = np.argsort(w, kind="stable")
    return w[order], Vn[:, order], sweeps, off


cdef inline double _lmax2(double a, double d, double br, double bi) nogil:
    cdef double h = 0.5 * (a - d)
    return 0.5 * (a + d) + sqrt(h * h + br * br + bi * bi)


def max_lambda_signs(ops):
    cdef Py_ssize_t m = ops.shape[0]
    cdef double[::1] a = np.ascontiguousarray(ops[:, 0, 0].real, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(ops[:, 1, 1].real, dtype=np.float64)
    cdef double[::1] br = np.ascontiguousarray(ops[:, 0, 1].real, dtype=np.float64)
    cdef double[::1] bi = np.ascontiguousarray(ops[:, 0, 1].imag, dtype=np.float64)
    signs_arr = np.ones(m, dtype=np.int64)
    best_arr = np.ones(m, dtype=np.int64)
    cdef long long[::1] signs = signs_arr
    cdef long long[::1] best_signs = best_arr
    cdef double sa = 0.0, sd = 0.0, sbr = 0.0, sbi = 0.0, f, val, best
    cdef Py_ssize_t x, i
    cdef unsigned long long k, kk, total
    if m > 62:
        raise OverflowError("too many sign patterns")
    total = (<unsigned long long>1) << m
    for x in range(m):
        sa += a[x]
        sd += d[x]
        sbr += br[x]
        sbi += bi[x]
    best = _lmax2(sa, sd, sbr, sbi)
    k = 1
    while k < total:
        kk = k
        x = 0
        while (kk & 1) == 0:
            kk >>= 1
            x += 1
        signs[x] = -signs[x]
        f = 2.0 * signs[x]
        sa += f * a[x]
        sd += f * d[x]
        sbr += f * br[x]
        sbi += f * bi[x]
        val = _lmax2(sa, sd, sbr, sbi)
        if val > best:
            best = val
            for i in range(m):
                best_signs[i] = signs[i]
        k += 1
    return best, best_arr


def restricted_growth_strings(int m, int d):
    if m == 0:
        return np.zeros((1, 0), dtype=np.int64)
    # Stirling numbers of the second kind give the exact row count
    row = [1] + [0] * d
    for _ in range(m):
        row = [0] + [k * row[k] + row[k - 1] for k in range(1, d + 1)]
    cdef Py_ssize_t total = sum(row)
    out_arr = np.zeros((total, m), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef long long[::1] s = np.zeros(m, dtype=np.int64)
    cdef long long[::1] mx = np.zeros(m, dtype=np.int64)
    cdef Py_ssize_t i, j, n = 0
    cdef long long top
    # iterative odometer over first-occurrence strings
    while True:
        for j in range(m):
            out[n, j] = s[j]
        n += 1
        i = m - 1
        while i >= 1:
            top = mx[i - 1] + 1
            if top > d - 1:
                top = d - 1
            if s[i] < top:
                break
            i -= 1
        if i < 1:
            break
        s[i] += 1
        mx[i] = mx[i - 1] if mx[i - 1] > s[i] else s[i]
        for j in range(i + 1, m):
            s[j] = 0
            mx[j] = mx[j - 1]
    return out_arr
