"""Dense complex linear algebra used throughout the package.

Hermitian matrices are plain ``numpy`` arrays; :func:`hermitian` is the
validating constructor that every other module funnels user input through.
"""
import math

import numpy as np

from classim import kernels
from classim.errors import SolverError, ValidationError

HERMITIAN_TOL = 1e-12
JACOBI_TOL = 1e-13
JACOBI_MAX_DIM = 16
PSD_TOL = 1e-10


def hermitian(a, tol=None):
    """Return ``(a + a^H) / 2`` as a complex array after sanity checks.

    ``tol`` (default: no check) bounds the allowed anti-Hermitian part
    relative to ``max(1, ||a||_max)``.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    if tol is not None:
        dev = np.abs(a - a.conj().T).max()
        if dev > tol * max(1.0, np.abs(a).max()):
            raise ValidationError(f"matrix is not Hermitian (deviation {dev:.3g})")
    return 0.5 * (a + a.conj().T)


def eig_hermitian(a, tol=JACOBI_TOL, max_sweeps=None):
    """Eigendecomposition of a Hermitian matrix.

    Parameters
    ----------
    a : array_like
        Hermitian ``(d, d)`` matrix; it is symmetrized before use.
    tol : float
        Relative off-diagonal Frobenius norm at which the Jacobi sweeps stop.
    max_sweeps : int, optional
        Iteration cap, ``100 * d**2`` by default.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    v : ndarray
        Orthonormal eigenvectors as columns, ``a @ v[:, k] = w[k] * v[:, k]``.

    Notes
    -----
    Cyclic complex Jacobi is used up to ``JACOBI_MAX_DIM``; larger matrices go
    to LAPACK.
    """
    a = hermitian(a)
    d = a.shape[0]
    if d > JACOBI_MAX_DIM:
        return np.linalg.eigh(a)
    if max_sweeps is None:
        max_sweeps = 100 * d * d
    w, v, _, off = kernels.jacobi_eigh(a, tol, max_sweeps)
    if off > tol:
        resid = np.linalg.norm(a @ v - v * w)
        raise SolverError("Jacobi eigensolver did not converge", residual=resid, off=off)
    return w, v


def eigvalsh(a):
    return eig_hermitian(a)[0]


def lambda_max(a):
    return eig_hermitian(a)[0][-1]


def is_psd(a, tol=0.0):
    """True iff the smallest eigenvalue of ``a`` is at least ``-tol``."""
    return bool(eig_hermitian(a)[0][0] >= -tol)


def sqrtm_psd(a):
    w, v = eig_hermitian(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def trace_norm(a):
    return float(np.abs(eigvalsh(a)).sum())


def trace_distance(a, b):
    return 0.5 * trace_norm(np.asarray(a) - np.asarray(b))


def sample_haar_unitary(d, rng):
    """Haar-random ``d x d`` unitary from a seeded ``numpy`` Generator.

    QR of a complex Ginibre matrix, with the phases of ``diag(R)`` moved into
    ``Q`` so the distribution is exactly Haar.
    """
    return sample_haar_unitaries(d, 1, rng)[0]


def sample_haar_unitaries(d, n, rng):
    """Stack of ``n`` independent Haar-random unitaries, shape ``(n, d, d)``.

    Draws are laid out so that, for a fixed generator state, the first ``k``
    unitaries do not depend on ``n``.
    """
    if d < 1 or n < 0:
        raise ValidationError("dimension must be >= 1 and count >= 0")
    g = rng.standard_normal((n, 2, d, d))
    z = (g[:, 0] + 1j * g[:, 1]) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    phase = diag / np.abs(diag)
    return q * phase.conj()[:, None, :]


def random_hermitian(d, rng, scale=1.0):
    """GUE-like Hermitian matrix with unit Frobenius norm times ``scale``."""
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = 0.5 * (x + x.conj().T)
    return scale * h / np.linalg.norm(h)


def unitary_exp(h, t=1.0):
    """``exp(i t h)`` for Hermitian ``h``."""
    w, v = eig_hermitian(h)
    return (v * np.exp(1j * t * w)) @ v.conj().T


def hermitian_basis(d):
    """Orthonormal Hermitian basis ``h`` of shape ``(d*d, d, d)``.

    ``tr(h[n] @ a)`` is component ``n`` of :func:`hermitian_to_real_vector`.
    Order: diagonal units, then for each ``j < k`` (row-major) the symmetric
    and antisymmetric off-diagonal elements.
    """
    basis = np.zeros((d * d, d, d), dtype=complex)
    for j in range(d):
        basis[j, j, j] = 1.0
    n = d
    r2 = 1.0 / math.sqrt(2.0)
    for j in range(d):
        for k in range(j + 1, d):
            basis[n, j, k] = basis[n, k, j] = r2
            basis[n + 1, j, k] = 1j * r2
            basis[n + 1, k, j] = -1j * r2
            n += 2
    return basis


def hermitian_to_real_vector(a):
    """Isometric real coordinates of a Hermitian matrix.

    ``<vec(a), vec(b)> = tr(a b)`` for Hermitian ``a``, ``b``.
    """
    a = np.asarray(a, dtype=complex)
    d = a.shape[0]
    iu = np.triu_indices(d, 1)
    off = a[iu]
    out = np.empty(d * d)
    out[:d] = np.diagonal(a).real
    out[d::2] = math.sqrt(2.0) * off.real
    out[d + 1::2] = math.sqrt(2.0) * off.imag
    return out


def real_vector_to_hermitian(v, d=None):
    v = np.asarray(v, dtype=float)
    if d is None:
        d = math.isqrt(v.size)
    if v.size != d * d:
        raise ValidationError(f"vector of length {v.size} is not d^2 for d={d}")
    a = np.zeros((d, d), dtype=complex)
    a[np.diag_indices(d)] = v[:d]
    iu = np.triu_indices(d, 1)
    vals = (v[d::2] + 1j * v[d + 1::2]) / math.sqrt(2.0)
    a[iu] = vals
    a[(iu[1], iu[0])] = vals.conj()
    return a


def hermitian_stack_to_real(ops):
    """Apply :func:`hermitian_to_real_vector` along the first axis of a stack."""
    ops = np.asarray(ops, dtype=complex)
    d = ops.shape[-1]
    iu = np.triu_indices(d, 1)
    off = ops[..., iu[0], iu[1]]
    out = np.empty(ops.shape[:-2] + (d * d,))
    out[..., :d] = np.diagonal(ops, axis1=-2, axis2=-1).real
    out[..., d::2] = math.sqrt(2.0) * off.real
    out[..., d + 1::2] = math.sqrt(2.0) * off.imag
    return out


def ket(d, i):
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v


def proj(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())
