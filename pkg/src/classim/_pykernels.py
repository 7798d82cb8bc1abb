"""Pure-Python implementations of the hot kernels.

Mirrors the compiled ``_kernels`` extension function for function; used when
the extension is not built or when ``CLASSIM_PURE_PYTHON`` is set.
"""
import math

import numpy as np


def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic complex Jacobi on a Hermitian matrix.

    Returns ``(w, v, sweeps, off)`` with ascending eigenvalues ``w``,
    eigenvectors as the columns of ``v``, the number of sweeps performed and
    the final off-diagonal Frobenius norm relative to ``||a||_F``.
    """
    n = a.shape[0]
    A = [[complex(a[i, j]) for j in range(n)] for i in range(n)]
    V = [[1.0 + 0j if i == j else 0j for j in range(n)] for i in range(n)]
    scale = math.sqrt(sum(abs(z) ** 2 for row in A for z in row))
    if scale == 0.0:
        return np.zeros(n), np.eye(n, dtype=complex), 0, 0.0

    def off_norm():
        s = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                z = A[i][j]
                s += z.real * z.real + z.imag * z.imag
        return math.sqrt(2.0 * s) / scale

    sweeps = 0
    off = off_norm()
    while off > tol and sweeps < max_sweeps:
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p][q]
                mag = abs(apq)
                if mag <= 1e-300 or mag < 1e-18 * scale:
                    continue
                e = apq / mag
                ec = e.conjugate()
                tau = (A[q][q].real - A[p][p].real) / (2.0 * mag)
                t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # R = [[c, s], [-s*conj(e), c*conj(e)]] on the (p, q) plane
                for k in range(n):
                    akp = A[k][p]
                    akq = A[k][q]
                    A[k][p] = c * akp - s * ec * akq
                    A[k][q] = s * akp + c * ec * akq
                for k in range(n):
                    apk = A[p][k]
                    aqk = A[q][k]
                    A[p][k] = c * apk - s * e * aqk
                    A[q][k] = s * apk + c * e * aqk
                A[p][q] = 0j
                A[q][p] = 0j
                A[p][p] = complex(A[p][p].real, 0.0)
                A[q][q] = complex(A[q][q].real, 0.0)
                for k in range(n):
                    vkp = V[k][p]
                    vkq = V[k][q]
                    V[k][p] = c * vkp - s * ec * vkq
                    V[k][q] = s * vkp + c * ec * vkq
        off = off_norm()

    w = np.array([A[i][i].real for i in range(n)])
    v = np.array(V, dtype=complex)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], sweeps, off


def _lmax2(a, d, br, bi):
    h = 0.5 * (a - d)
    return 0.5 * (a + d) + math.sqrt(h * h + br * br + bi * bi)


def max_lambda_signs(ops):
    """Largest eigenvalue of ``sum_x s_x ops[x]`` over all sign vectors ``s``.

    ``ops`` is an ``(m, 2, 2)`` stack of Hermitian matrices.  The search walks
    a Gray code so each step flips one sign.  Returns ``(best, signs)``.
    """
    m = ops.shape[0]
    a = [float(ops[x, 0, 0].real) for x in range(m)]
    d = [float(ops[x, 1, 1].real) for x in range(m)]
    br = [float(ops[x, 0, 1].real) for x in range(m)]
    bi = [float(ops[x, 0, 1].imag) for x in range(m)]
    sa, sd, sbr, sbi = sum(a), sum(d), sum(br), sum(bi)
    signs = [1] * m
    best = _lmax2(sa, sd, sbr, sbi)
    best_signs = list(signs)
    for k in range(1, 1 << m):
        x = (k & -k).bit_length() - 1
        signs[x] = -signs[x]
        f = 2.0 * signs[x]
        sa += f * a[x]
        sd += f * d[x]
        sbr += f * br[x]
        sbi += f * bi[x]
        val = _lmax2(sa, sd, sbr, sbi)
        if val > best:
            best = val
            best_signs = list(signs)
    return best, np.array(best_signs, dtype=np.int64)


def restricted_growth_strings(m, d):
    """All length-``m`` strings over ``0..d-1`` in first-occurrence form.

    Each string is the canonical representative of its orbit under
    relabelling of the alphabet; output is in lexicographic order.
    """
    out = []
    s = [0] * m
    if m == 0:
        return np.zeros((1, 0), dtype=np.int64)
    # prefix maxima: mx[i] = max(s[:i+1])
    mx = [0] * m

    def rec(i):
        if i == m:
            out.append(list(s))
            return
        top = min(mx[i - 1] + 1, d - 1)
        for val in range(top + 1):
            s[i] = val
            mx[i] = max(mx[i - 1], val)
            rec(i + 1)

    rec(1)
    return np.array(out, dtype=np.int64)
