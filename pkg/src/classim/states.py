"""State sets, measurements and the standard generators.

A :class:`StateSet` holds ``m`` density matrices of a common dimension as a
``(m, d, d)`` complex array with one label per state. Validation happens at
construction; a ``repair`` flag clips small negative eigenvalues for user
supplied near-states.
"""
import json
import math

import numpy as np

from classim.errors import UnsupportedDimensionError, ValidationError
from classim.linalg import HERMITIAN_TOL, eig_hermitian, proj

STATE_TOL = 1e-10
POVM_TOL = 1e-9

_SIC4_FIDUCIAL = np.array([
    complex(0.2011885864868658, 0.0),
    complex(-0.3076345531059190, -0.2569832962716322),
    complex(0.0, 0.4857122140912642),
    complex(0.1064459666190527, 0.7426955103628959),
])

# columns are basis vectors, overall factor 1/2
_MUB4 = [
    [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, -1, 1], [1, -1, 1, -1]],
    [[1, 1, 1, 1], [-1, -1, 1, 1], [-1j, 1j, 1j, -1j], [-1j, 1j, -1j, 1j]],
    [[1, 1, 1, 1], [-1j, -1j, 1j, 1j], [-1j, 1j, 1j, -1j], [-1, 1, -1, 1]],
    [[1, 1, 1, 1], [-1j, -1j, 1j, 1j], [-1, 1, -1, 1], [-1j, 1j, 1j, -1j]],
]


def _is_prime(n):
    return n >= 2 and all(n % k for k in range(2, math.isqrt(n) + 1))


def _as_stack(ops, d=None):
    arr = np.asarray(ops, dtype=complex)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValidationError(f"expected a stack of square matrices, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ValidationError(f"matrices have dimension {arr.shape[1]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix entries must be finite")
    dev = np.abs(arr - arr.conj().transpose(0, 2, 1)).max() if arr.size else 0.0
    if dev > HERMITIAN_TOL * max(1.0, np.abs(arr).max()):
        raise ValidationError(f"matrix is not Hermitian (deviation {dev:.3g})")
    return 0.5 * (arr + arr.conj().transpose(0, 2, 1))


class StateSet:
    """Ordered collection of density matrices with labels.

    Parameters
    ----------
    states : array_like
        ``(m, d, d)`` complex array (or a single ``(d, d)`` matrix).
    labels : sequence of str, optional
        Defaults to ``"0"``, ``"1"``, ...
    repair : bool
        Clip negative eigenvalues and renormalize instead of rejecting
        states that are slightly off. Off by default.
    """

    def __init__(self, states, labels=None, repair=False, tol=STATE_TOL):
        arr = _as_stack(states)
        m, d = arr.shape[0], arr.shape[1]
        if m < 1:
            raise ValidationError("a state set needs at least one state")
        if labels is None:
            labels = [str(i) for i in range(m)]
        labels = tuple(str(s) for s in labels)
        if len(labels) != m:
            raise ValidationError(f"{len(labels)} labels for {m} states")
        for x in range(m):
            w, v = eig_hermitian(arr[x])
            tr = np.real(np.trace(arr[x]))
            if repair:
                w = np.clip(w, 0.0, None)
                if w.sum() <= 0:
                    raise ValidationError(f"state {labels[x]!r} cannot be repaired")
                w = w / w.sum()
                arr[x] = (v * w) @ v.conj().T
                continue
            if abs(tr - 1.0) > tol:
                raise ValidationError(f"state {labels[x]!r} has trace {tr:.12g}")
            if w[0] < -tol:
                raise ValidationError(f"state {labels[x]!r} has eigenvalue {w[0]:.3g}")
        arr.setflags(write=False)
        self._states = arr
        self.labels = labels

    @property
    def states(self):
        return self._states

    @property
    def dim(self):
        return self._states.shape[1]

    @property
    def m(self):
        return self._states.shape[0]

    def __len__(self):
        return self.m

    def __getitem__(self, x):
        return self._states[x]

    def __repr__(self):
        return f"StateSet(d={self.dim}, m={self.m}, labels={list(self.labels)})"

    def purities(self):
        return np.real(np.einsum("xij,xji->x", self._states, self._states))

    def to_dict(self):
        return {"dim": self.dim,
                "states": [{"label": lab, "matrix": matrix_to_json(rho)}
                           for lab, rho in zip(self.labels, self._states)]}

    @classmethod
    def from_dict(cls, data, repair=False):
        try:
            mats = [matrix_from_json(s["matrix"]) for s in data["states"]]
            labels = [s.get("label", str(i)) for i, s in enumerate(data["states"])]
            d = int(data["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed state set: {exc}") from exc
        if not mats:
            raise ValidationError("state set file contains no states")
        out = cls(np.array(mats), labels, repair=repair)
        if out.dim != d:
            raise ValidationError(f"declared dim {d} but matrices are {out.dim}x{out.dim}")
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, ensure_ascii=False)

    @classmethod
    def load(cls, path, repair=False):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), repair=repair)


class Povm:
    """A measurement as a stack of PSD effects summing to the identity."""

    def __init__(self, effects, tol=POVM_TOL):
        arr = _as_stack(effects)
        d = arr.shape[1]
        for k in range(arr.shape[0]):
            w = eig_hermitian(arr[k])[0]
            if w[0] < -STATE_TOL:
                raise ValidationError(f"effect {k} has eigenvalue {w[0]:.3g}")
        dev = np.linalg.norm(arr.sum(axis=0) - np.eye(d))
        if dev > tol:
            raise ValidationError(f"effects sum to identity only within {dev:.3g}")
        arr.setflags(write=False)
        self.effects = arr

    @property
    def dim(self):
        return self.effects.shape[1]

    @property
    def n_outcomes(self):
        return self.effects.shape[0]

    def __len__(self):
        return self.n_outcomes

    def __getitem__(self, b):
        return self.effects[b]

    def __repr__(self):
        return f"Povm(d={self.dim}, outcomes={self.n_outcomes})"

    @classmethod
    def from_basis(cls, u):
        """Projective measurement onto the columns of a unitary."""
        u = np.asarray(u, dtype=complex)
        return cls(np.einsum("ik,jk->kij", u, u.conj()))

    def is_rank_one_projective(self, tol=STATE_TOL):
        for e in self.effects:
            if np.abs(e @ e - e).max() > tol or abs(np.real(np.trace(e)) - 1.0) > tol:
                return False
        return True

    def basis(self):
        """Unitary whose columns span the effects of a rank-one projective POVM."""
        if not self.is_rank_one_projective():
            raise ValidationError("measurement is not rank-one projective")
        cols = [eig_hermitian(e)[1][:, -1] for e in self.effects]
        return np.array(cols).T

    def to_list(self):
        return [matrix_to_json(e) for e in self.effects]

    @classmethod
    def from_list(cls, data):
        return cls(np.array([matrix_from_json(e) for e in data]))


def matrix_to_json(a):
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def matrix_from_json(rows):
    try:
        return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"matrix entries must be [re, im] pairs: {exc}") from exc


def povms_to_json(povms):
    return [p.to_list() for p in povms]


def povms_from_json(data):
    return [Povm.from_list(p) for p in data]


def apply_isotropic_noise(states, v):
    """Mix every state with white noise: ``v rho + (1 - v) I / d``."""
    if not 0.0 <= v <= 1.0:
        raise ValidationError(f"visibility must lie in [0, 1], got {v}")
    d = states.dim
    out = v * states.states + (1.0 - v) / d * np.eye(d)
    return StateSet(out, states.labels)


def gen_bb84():
    """The four BB84 qubit states, labelled ``0``, ``1``, ``+``, ``-``."""
    s = 1.0 / math.sqrt(2.0)
    kets = [[1, 0], [0, 1], [s, s], [s, -s]]
    return StateSet(np.array([proj(k) for k in kets]), ["0", "1", "+", "-"])


def gen_mub_bases(d):
    """Complete set of ``d + 1`` mutually unbiased bases.

    Supported for prime ``d`` and for ``d = 4``. Each basis is returned as a
    rank-one projective :class:`Povm`.
    """
    if d == 2:
        s = 1.0 / math.sqrt(2.0)
        us = [np.eye(2), np.array([[s, s], [s, -s]]), np.array([[s, s], [1j * s, -1j * s]])]
    elif d == 4:
        us = [np.eye(4)] + [0.5 * np.array(b, dtype=complex) for b in _MUB4]
    elif _is_prime(d):
        w = np.exp(2j * np.pi / d)
        l = np.arange(d)
        us = [np.eye(d)]
        for j in range(d):
            us.append(np.array([w ** ((j * l * l + k * l) % d) for k in range(d)]).T / math.sqrt(d))
    else:
        raise UnsupportedDimensionError(f"MUBs are only provided for prime d and d = 4, not d = {d}")
    _check_unbiased(us, d)
    return [Povm.from_basis(u) for u in us]


def _check_unbiased(us, d):
    for u in us:
        if np.abs(u.conj().T @ u - np.eye(d)).max() > 1e-10:
            raise ValidationError("MUB table entry is not unitary")
    for a in range(len(us)):
        for b in range(a + 1, len(us)):
            ov = np.abs(us[a].conj().T @ us[b]) ** 2
            if np.abs(ov - 1.0 / d).max() > 1e-10:
                raise ValidationError(f"bases {a} and {b} are not unbiased")


def gen_mub_states(d, n_bases):
    """All ``d * n_bases`` states of the first ``n_bases`` MUBs, labelled ``(j,k)``."""
    bases = gen_mub_bases(d)
    if not 1 <= n_bases <= len(bases):
        raise ValidationError(f"need 1 <= N <= {len(bases)}, got {n_bases}")
    states, labels = [], []
    for j in range(n_bases):
        for k in range(d):
            states.append(bases[j].effects[k])
            labels.append(f"({j},{k})")
    return StateSet(np.array(states), labels)


def weyl_heisenberg(d):
    """Displacement operators ``X^a Z^b`` in order ``(a, b)`` lexicographic."""
    w = np.exp(2j * np.pi / d)
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(w ** np.arange(d))
    return [np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b)
            for a in range(d) for b in range(d)]


def gen_sic(d):
    """Weyl-Heisenberg SIC set of ``d**2`` pure states for ``d`` in 2, 3, 4."""
    if d == 2:
        # Bloch vector (1, 1, 1)/sqrt(3)
        t = math.acos(1.0 / math.sqrt(3.0))
        fid = np.array([math.cos(t / 2), np.exp(1j * math.pi / 4) * math.sin(t / 2)])
    elif d == 3:
        fid = np.array([0.0, 1.0, -1.0]) / math.sqrt(2.0)
    elif d == 4:
        fid = _SIC4_FIDUCIAL / np.linalg.norm(_SIC4_FIDUCIAL)
    else:
        raise UnsupportedDimensionError(f"SIC sets are only provided for d in (2, 3, 4), not {d}")
    kets = [dop @ fid for dop in weyl_heisenberg(d)]
    gram = np.abs(np.array(kets).conj() @ np.array(kets).T) ** 2
    off = gram[~np.eye(d * d, dtype=bool)]
    if np.abs(off - 1.0 / (d + 1)).max() > 1e-9:
        raise ValidationError(f"SIC fiducial for d={d} failed the overlap check")
    return StateSet(np.array([proj(k) for k in kets]), [f"sic{i}" for i in range(d * d)])


def gen_pair_maxcoherent():
    """``|0>`` and the uniform superposition in ``d = 3``."""
    psi = np.ones(3) / math.sqrt(3.0)
    return StateSet(np.array([proj([1, 0, 0]), proj(psi)]), ["0", "psi"])


def extend_set(states):
    """Append ``(I - rho_x) / (d - 1)`` for every state, labels suffixed with a prime."""
    d = states.dim
    if d < 2:
        raise UnsupportedDimensionError("the extended set needs d >= 2")
    extra = (np.eye(d) - states.states) / (d - 1)
    return StateSet(np.concatenate([states.states, extra]),
                    list(states.labels) + [lab + "′" for lab in states.labels])


def computational_basis_povm(d):
    return Povm.from_basis(np.eye(d))
