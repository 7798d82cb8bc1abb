"""Closed-form simulability visibilities and Haar Monte-Carlo checks.

The Haar model behind :func:`bound_result1` lets every device draw a random
basis, keep ``r`` of its vectors and emit the kept vector closest to the
target. Averaged over the Haar measure this produces the target mixed with
white noise; the Monte-Carlo routines here sample that average directly.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np

from classim.errors import ValidationError
from classim.linalg import eig_hermitian, sample_haar_unitaries, trace_distance
from classim.simulation import ClassicalModel, Device

MC_CHUNK = 20_000
MC_MIN_SAMPLES = 1000
PURITY_TOL = 1e-9

RESULT1 = "result1"
RESULT1_SUBSPACE = "result1_subspace"
RESULT3 = "result3"


@dataclass(frozen=True)
class AnalyticBound:
    """A visibility below which a classical model of complexity ``r`` exists.

    ``s`` is set only for the subspace variant and ``M`` only for the
    several-bases construction.
    """

    kind: str
    d: int
    r: int
    v: float
    s: int = None
    M: int = None

    def __post_init__(self):
        if self.kind not in (RESULT1, RESULT1_SUBSPACE, RESULT3):
            raise ValidationError(f"unknown bound kind {self.kind!r}")
        if not 1 <= self.r <= self.d:
            raise ValidationError(f"need 1 <= r <= d, got r={self.r}, d={self.d}")
        if self.s is not None and not self.r <= self.s <= self.d:
            raise ValidationError(f"need r <= s <= d, got s={self.s}")
        if self.M is not None and self.M < 1:
            raise ValidationError(f"need M >= 1, got {self.M}")
        if not -1e-12 <= self.v <= 1.0 + 1e-12:
            raise ValidationError(f"visibility {self.v} outside [0, 1]")

    def to_dict(self):
        out = {"kind": self.kind, "d": self.d, "r": self.r, "v": self.v}
        if self.s is not None:
            out["s"] = self.s
        if self.M is not None:
            out["M"] = self.M
        return out


def _check_dr(d, r):
    if int(d) != d or int(r) != r:
        raise ValidationError("d and r must be integers")
    if d < 2:
        raise ValidationError(f"need d >= 2, got {d}")
    if not 1 <= r <= d:
        raise ValidationError(f"need 1 <= r <= d, got r={r}, d={d}")


def harmonic(n):
    """``H_n = 1 + 1/2 + ... + 1/n``, summed in ascending order."""
    if int(n) != n or n < 1:
        raise ValidationError(f"harmonic number needs a positive integer, got {n}")
    total = 0.0
    for k in range(1, int(n) + 1):
        total += 1.0 / k
    return total


def bound_result1(d, r):
    """Visibility ``(H_r - 1) / (d - 1)`` reachable for any set of states."""
    _check_dr(d, r)
    return AnalyticBound(RESULT1, int(d), int(r), (harmonic(r) - 1.0) / (d - 1))


def bound_result1_subspace(d, s, r):
    """Variant for states spanning an ``s``-dimensional subspace.

    Reduces to :func:`bound_result1` at ``s = d`` and is never smaller.
    """
    _check_dr(d, r)
    if int(s) != s or not r <= s <= d:
        raise ValidationError(f"need r <= s <= d, got s={s}")
    h = harmonic(r)
    num = h - 1.0
    den = d - 1.0 - h * (d / s - 1.0)
    if num == 0.0:
        v = 0.0
    elif den <= 0.0:
        raise ValidationError(f"subspace formula degenerates for d={d}, s={s}, r={r}")
    else:
        v = num / den
    return AnalyticBound(RESULT1_SUBSPACE, int(d), int(r), v, s=int(s))


def bound_result3(d, M, r):
    """Visibility ``(r - 1) / (M (d - 1))`` for the states of ``M`` bases."""
    _check_dr(d, r)
    if int(M) != M or M < 1:
        raise ValidationError(f"need M >= 1, got {M}")
    return AnalyticBound(RESULT3, int(d), int(r), (r - 1.0) / (M * (d - 1.0)), M=int(M))


def build_bases_model(bases, r):
    """Explicit model for the noisy states of several bases.

    Device ``(j, mu)`` measures in basis ``j`` restricted to the ``r``-subset
    ``mu`` (subsets in lexicographic order, bases outermost). For the state
    ``(j, i)`` it emits ``|e_i^(j)>`` when it uses basis ``j`` and ``i`` is in
    ``mu``; otherwise it emits the uniform mixture over ``mu``. All devices
    are equally likely.

    Parameters
    ----------
    bases : list of Povm
        Rank-one projective measurements of a common dimension.
    r : int

    Returns
    -------
    ClassicalModel
        Reconstructs the set ordered basis-major at the visibility of
        :func:`bound_result3`.
    """
    bases = list(bases)
    if not bases:
        raise ValidationError("at least one basis is required")
    d = bases[0].dim
    if any(b.dim != d for b in bases):
        raise ValidationError("bases must share a dimension")
    if any(b.n_outcomes != d for b in bases):
        raise ValidationError("each basis needs exactly d outcomes")
    _check_dr(d, r)
    us = [b.basis() for b in bases]
    n_states = len(bases) * d
    devices, cond = [], []
    for j, u in enumerate(us):
        for mu in itertools.combinations(range(d), r):
            table = np.full((n_states, r), 1.0 / r)
            for pos, i in enumerate(mu):
                row = table[j * d + i]
                row[:] = 0.0
                row[pos] = 1.0
            devices.append(Device(u, mu))
            cond.append(table)
    weights = np.full(len(devices), 1.0 / len(devices))
    return ClassicalModel(devices, weights, cond)


def _chunks(n):
    done = 0
    idx = 0
    while done < n:
        size = min(MC_CHUNK, n - done)
        yield idx, size
        done += size
        idx += 1


def _chunk_rng(seed, idx):
    return np.random.default_rng(np.random.SeedSequence([int(seed), idx]))


def _check_samples(n):
    if int(n) != n or n < MC_MIN_SAMPLES:
        raise ValidationError(f"need at least {MC_MIN_SAMPLES} samples, got {n}")


def mc_mean_max_overlap(d, r, n_samples, seed=0):
    """Monte-Carlo estimate of ``E max_{i<r} |<0|U|i>|^2`` over Haar ``U``.

    Samples are drawn in chunks with generators seeded by ``(seed, chunk)``,
    so the result depends only on ``seed`` and ``n_samples``.

    Returns
    -------
    mean, std_error : float
        The estimate tends to ``H_r / d``.
    """
    _check_dr(d, r)
    _check_samples(n_samples)
    total = 0.0
    total_sq = 0.0
    for idx, size in _chunks(int(n_samples)):
        u = sample_haar_unitaries(d, size, _chunk_rng(seed, idx))
        best = (np.abs(u[:, 0, :r]) ** 2).max(axis=1)
        total += best.sum()
        total_sq += (best * best).sum()
    n = int(n_samples)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def mc_verify_result1(target, d, r, n_samples, seed=0):
    """Trace distance between the sampled Haar model and its noisy target.

    For every sampled basis the kept vector with the largest overlap with
    the target is selected (lowest index on ties); the average of the
    selected projectors is compared with ``v psi + (1 - v) I / d`` at the
    visibility of :func:`bound_result1`.
    """
    _check_dr(d, r)
    _check_samples(n_samples)
    rho = np.asarray(target, dtype=complex)
    if rho.shape != (d, d):
        raise ValidationError(f"target must be {d}x{d}, got {rho.shape}")
    w, vecs = eig_hermitian(rho)
    if abs(w[-1] - 1.0) > PURITY_TOL or np.abs(w[:-1]).max(initial=0.0) > PURITY_TOL:
        raise ValidationError("target state is not pure")
    psi = vecs[:, -1]
    acc = np.zeros((d, d), dtype=complex)
    for idx, size in _chunks(int(n_samples)):
        u = sample_haar_unitaries(d, size, _chunk_rng(seed, idx))[:, :, :r]
        amp = np.einsum("i,nik->nk", psi.conj(), u)
        pick = np.argmax(np.abs(amp) ** 2, axis=1)
        vec = u[np.arange(size), :, pick]
        acc += np.einsum("ni,nj->ij", vec, vec.conj())
    avg = acc / int(n_samples)
    v = bound_result1(d, r).v
    pred = v * np.outer(psi, psi.conj()) + (1.0 - v) / d * np.eye(d)
    return trace_distance(avg, pred)


def mix_models(model_a, model_b, p):
    """Model for the mixtures ``p rho_x + (1 - p) sigma_y``.

    The state ``(x, y)`` sits at index ``x * m_b + y``. Devices of
    ``model_a`` keep their distribution for ``x``, devices of ``model_b``
    theirs for ``y``. Devices whose weight vanishes are dropped.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"mixing weight must lie in [0, 1], got {p}")
    if model_a.dim != model_b.dim:
        raise ValidationError(f"dimension mismatch: {model_a.dim} vs {model_b.dim}")
    ma, mb = model_a.n_states, model_b.n_states
    devices, weights, cond = [], [], []
    for q, dev, c in zip(model_a.weights, model_a.devices, model_a.cond):
        if p * q > 0.0:
            devices.append(dev)
            weights.append(p * q)
            cond.append(np.repeat(c, mb, axis=0))
    for q, dev, c in zip(model_b.weights, model_b.devices, model_b.cond):
        if (1.0 - p) * q > 0.0:
            devices.append(dev)
            weights.append((1.0 - p) * q)
            cond.append(np.tile(c, (ma, 1)))
    return ClassicalModel(devices, weights, cond)
