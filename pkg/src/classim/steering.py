"""Steering inequalities, parent measurements and joint measurability.

A full-correlation qubit steering inequality ``sum s[x, y] <A_x B_y> <= zeta``
turns into a set witness with the same bound. A classical model of a set
yields a parent measurement for the binarized measurements
``{rho_x, I - rho_x}``; for qubits the construction can be reversed.
"""
import json
from dataclasses import dataclass

import numpy as np

from classim.errors import SizingError, SolverError, ValidationError
from classim.linalg import eigvalsh
from classim.simulation import ClassicalModel, Device
from classim.solvers.sdp import SdpBuilder, sdp_feasible
from classim.states import matrix_from_json, matrix_to_json, povms_from_json, povms_to_json
from classim.witness import qubit_exact_bound, sign_witness

PROJECTIVE_TOL = 1e-10
PARENT_TOL = 1e-9
BLOCH_TOL = 1e-9
JM_MAX_STATES = 12
JM_WIDTH = 1e-4

_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


@dataclass
class SteeringInequality:
    """``sum_{x,y} s[x, y] <A_x B_y> <= zeta`` with Bob's qubit measurements."""

    s: np.ndarray
    bob_measurements: list

    def __post_init__(self):
        self.s = np.array(self.s, dtype=float)
        self.bob_measurements = list(self.bob_measurements)
        if self.s.ndim != 2 or self.s.shape[1] != len(self.bob_measurements):
            raise ValidationError(
                f"s must have shape (m, {len(self.bob_measurements)}), got {self.s.shape}")
        for y, mm in enumerate(self.bob_measurements):
            if mm.dim != 2 or mm.n_outcomes != 2:
                raise ValidationError(f"Bob's measurement {y} is not a two-outcome qubit measurement")
            if not mm.is_rank_one_projective(PROJECTIVE_TOL):
                raise ValidationError(f"Bob's measurement {y} is not rank-one projective")

    def to_dict(self):
        return {"s": self.s.tolist(), "bob_measurements": povms_to_json(self.bob_measurements)}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["s"], povms_from_json(data["bob_measurements"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed steering inequality: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def steering_to_witness(ineq):
    """Set witness ``c[b, x, y] = (-1)^b s[x, y]`` and its exact bound ``zeta``."""
    w = sign_witness(ineq.s, ineq.bob_measurements)
    return w, qubit_exact_bound(ineq.s, ineq.bob_measurements)


class ParentMeasurement:
    """POVM ``G`` with post-processing ``p(a | x, mu)`` for binary outcomes ``a``.

    Parameters
    ----------
    effects : array_like
        ``(K, d, d)`` parent effects.
    post0 : array_like
        ``(m, K)`` array of ``p(0 | x, mu)``; ``p(1 | x, mu)`` is the
        complement.
    labels : list, optional
        One label per parent outcome.
    """

    def __init__(self, effects, post0, labels=None, tol=PARENT_TOL):
        g = np.array(effects, dtype=complex)
        p0 = np.array(post0, dtype=float)
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise ValidationError(f"effects must be a (K, d, d) stack, got {g.shape}")
        if p0.ndim != 2 or p0.shape[1] != g.shape[0]:
            raise ValidationError(f"post-processing must have shape (m, {g.shape[0]}), got {p0.shape}")
        d = g.shape[1]
        if np.abs(g - g.conj().transpose(0, 2, 1)).max() > tol:
            raise ValidationError("parent effects are not Hermitian")
        low = min(eigvalsh(e)[0] for e in g)
        if low < -tol:
            raise ValidationError(f"parent effect has negative eigenvalue {low:.3g}")
        if np.abs(g.sum(axis=0) - np.eye(d)).max() > tol:
            raise ValidationError("parent effects do not sum to the identity")
        if p0.min() < -tol or p0.max() > 1.0 + tol:
            raise ValidationError("post-processing probabilities outside [0, 1]")
        self.effects = g
        self.post0 = np.clip(p0, 0.0, 1.0)
        self.labels = list(labels) if labels is not None else [str(k) for k in range(g.shape[0])]
        if len(self.labels) != g.shape[0]:
            raise ValidationError("one label per parent outcome required")

    @property
    def dim(self):
        return self.effects.shape[1]

    @property
    def n_outcomes(self):
        return self.effects.shape[0]

    @property
    def m(self):
        return self.post0.shape[0]

    def marginals(self):
        """``(m, 2, d, d)`` array of ``M_{a|x} = sum_mu p(a|x,mu) G_mu``."""
        m0 = np.einsum("xk,kij->xij", self.post0, self.effects)
        m1 = np.einsum("xk,kij->xij", 1.0 - self.post0, self.effects)
        return np.stack([m0, m1], axis=1)

    def to_dict(self):
        return {"dim": self.dim, "labels": [str(l) for l in self.labels],
                "effects": [matrix_to_json(e) for e in self.effects],
                "post0": self.post0.tolist()}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(np.array([matrix_from_json(e) for e in data["effects"]]),
                       data["post0"], data.get("labels"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed parent measurement: {exc}") from exc


def extend_model(model):
    """Model of the extended set ``{rho_x} + {(I - rho_x)/(d - 1)}``.

    Devices are promoted to their full basis; vectors outside a device's
    subset get probability zero for the original states. The new states use
    ``(1 - p(i|x, lambda)) / (d - 1)`` in the same bases.
    """
    d = model.dim
    if d < 2:
        raise ValidationError("extension needs d >= 2")
    devices, cond = [], []
    for dev, c in zip(model.devices, model.cond):
        full = np.zeros((c.shape[0], d))
        full[:, list(dev.subset)] = c
        devices.append(Device(dev.basis))
        cond.append(np.vstack([full, (1.0 - full) / (d - 1)]))
    return ClassicalModel(devices, model.weights, cond)


def parent_from_model(model, m=None):
    """Parent measurement for ``{rho_x, I - rho_x}`` built from a model.

    ``G(i, lambda) = q(lambda) |phi_i><phi_i|`` and
    ``p(0 | x, (i, lambda)) = p(i | x, lambda)``. Only the first ``m``
    states are binarized (all by default), so a model of an extended set can
    be passed directly.

    Raises
    ------
    ValidationError
        If a device does not use its full basis (see :func:`extend_model`)
        or the construction fails its own checks.
    """
    d = model.dim
    m = model.n_states if m is None else int(m)
    if not 1 <= m <= model.n_states:
        raise ValidationError(f"m must lie in 1..{model.n_states}")
    for lam, dev in enumerate(model.devices):
        if dev.r != d:
            raise ValidationError(
                f"device {lam} uses {dev.r} of {d} basis vectors; complete it with extend_model")
    effects, post0, labels = [], [], []
    for lam, (q, dev, c) in enumerate(zip(model.weights, model.devices, model.cond)):
        for pos, i in enumerate(dev.subset):
            v = dev.basis[:, i]
            effects.append(q * np.outer(v, v.conj()))
            post0.append(c[:m, pos])
            labels.append((lam, i))
    parent = ParentMeasurement(np.array(effects), np.array(post0).T, labels)
    target = model.reconstruct_all()[:m]
    err = np.abs(parent.marginals()[:, 0] - target).max()
    if err > PARENT_TOL:
        raise ValidationError(f"parent marginals deviate from the model by {err:.3g}")
    return parent


def _bloch(a):
    """``(trace / 2, Bloch vector)`` of a Hermitian qubit operator."""
    return float(np.real(np.trace(a))) / 2.0, np.real(np.einsum("kij,ji->k", _PAULI, a)) / 2.0


def _basis_along(n):
    """Unitary whose first column has Bloch vector ``n`` (second has ``-n``)."""
    h = np.einsum("k,kij->ij", n, _PAULI)
    _, v = np.linalg.eigh(h)
    return v[:, ::-1]


def qubit_model_from_parent(parent, centered=None):
    """Classical model of ``{M_{0|x}}`` from a qubit parent measurement.

    Each effect is written ``G = p (I + eta n.sigma)``; the device measures
    along ``n`` with weight ``p`` and emits the ``+n`` vector with
    probability ``(1 + mu) / 2``.

    The direct assignment ``mu = 2 p(0|x) eta`` needs ``p(0|x) <= 1/2`` for
    all outcomes and states; if instead ``p(1|x) <= 1/2`` throughout, the
    model of ``{I - M_{0|x}}`` is built and flipped. The centered assignment
    ``mu = (2 p(0|x) - 1) eta`` is valid for any parent because the
    weighted Bloch vectors of the effects cancel.

    Parameters
    ----------
    parent : ParentMeasurement
    centered : bool or None
        ``True`` forces the centered assignment, ``False`` forbids it and
        ``None`` uses it only when neither direct route applies.

    Raises
    ------
    ValidationError
        If ``d != 2``, an effect has zero trace, or ``centered=False`` and
        the post-processing straddles 1/2 (names the offending outcome).
    """
    if parent.dim != 2:
        raise ValidationError("the reverse construction is for qubits only")
    m0 = parent.marginals()[:, 0]
    if np.abs(np.real(np.einsum("xii->x", m0)) - 1.0).max() > PARENT_TOL:
        raise ValidationError("the binarized effects M_{0|x} must have unit trace")
    weights, axes, etas = [], [], []
    for lam, g in enumerate(parent.effects):
        p, vec = _bloch(g)
        if p <= BLOCH_TOL:
            raise ValidationError(f"parent outcome {parent.labels[lam]} has zero trace")
        norm = np.linalg.norm(vec)
        eta = norm / p
        if eta > 1.0 + BLOCH_TOL:
            raise ValidationError(f"parent outcome {parent.labels[lam]} is not positive")
        weights.append(p)
        etas.append(min(eta, 1.0))
        axes.append(vec / norm if norm > BLOCH_TOL * p else np.array([0.0, 0.0, 1.0]))
    etas = np.array(etas)
    p0 = parent.post0
    if centered:
        mu, flip = (2.0 * p0 - 1.0) * etas, False
    elif np.all(p0 <= 0.5 + PARENT_TOL):
        mu, flip = 2.0 * p0 * etas, False
    elif np.all(p0 >= 0.5 - PARENT_TOL):
        mu, flip = 2.0 * (1.0 - p0) * etas, True
    elif centered is None:
        mu, flip = (2.0 * p0 - 1.0) * etas, False
    else:
        bad = np.flatnonzero(((p0 > 0.5 + PARENT_TOL).any(axis=0)) & ((p0 < 0.5 - PARENT_TOL).any(axis=0)))
        lam = int(bad[0]) if bad.size else int(np.argmax((p0 > 0.5 + PARENT_TOL).any(axis=0)))
        raise ValidationError(
            f"post-processing of parent outcome {parent.labels[lam]} straddles 1/2; "
            "the centered assignment is needed")
    mu = np.clip(mu, -1.0, 1.0)
    up = (1.0 + mu) / 2.0
    if flip:
        up = 1.0 - up
    devices = [Device(_basis_along(n)) for n in axes]
    cond = [np.stack([up[:, lam], 1.0 - up[:, lam]], axis=1) for lam in range(len(devices))]
    model = ClassicalModel(devices, weights, cond)
    err = np.abs(model.reconstruct_all() - m0).max()
    if err > PARENT_TOL:
        raise ValidationError(f"reverse construction misses the states by {err:.3g}")
    return model


def jm_problem(states, v):
    """Feasibility SDP for joint measurability of the binarized noisy set.

    Parent effects ``G_a`` for ``a`` in ``{0,1}^m`` sum to the identity and
    ``sum_{a: a_x = 0} G_a = v rho_x + (1 - v) I / d``.
    """
    m, d = states.m, states.dim
    if m > JM_MAX_STATES:
        raise SizingError(f"{2 ** m} parent outcomes exceed the cap (m <= {JM_MAX_STATES})")
    if not 0.0 <= v <= 1.0:
        raise ValidationError(f"visibility must lie in [0, 1], got {v}")
    bits = (np.arange(2 ** m)[:, None] >> np.arange(m - 1, -1, -1)) & 1
    b = SdpBuilder()
    blocks = [b.add_block(d) for _ in range(2 ** m)]
    b.add_matrix_equality({k: 1.0 for k in blocks}, np.eye(d))
    targets = v * states.states + (1.0 - v) / d * np.eye(d)
    for x in range(m):
        b.add_matrix_equality({k: 1.0 for k in blocks if bits[k, x] == 0}, targets[x])
    return b.build(maximize=False), bits


def jm_binarized_feasible(states, v, return_parent=False):
    """Whether ``{rho_x(v), I - rho_x(v)}`` is jointly measurable.

    Returns
    -------
    bool, or (bool, ParentMeasurement or None) when ``return_parent``
    """
    if v == 0.0:
        d = states.dim
        parent = ParentMeasurement(np.eye(d)[None], np.full((states.m, 1), 1.0 / d), ["I"])
        return (True, parent) if return_parent else True
    p, bits = jm_problem(states, v)
    res = sdp_feasible(p)
    if not return_parent:
        return res.feasible
    if not res.feasible:
        return False, None
    g = np.array(res.blocks)
    g = 0.5 * (g + g.conj().transpose(0, 2, 1))
    labels = ["".join(str(int(t)) for t in row) for row in bits]
    return True, ParentMeasurement(g, (bits == 0).T.astype(float), labels, tol=1e-6)


def jm_threshold(states, lo=0.0, hi=1.0, width=JM_WIDTH):
    """Largest visibility with jointly measurable binarizations, by bisection."""
    if not 0.0 <= lo < hi <= 1.0:
        raise ValidationError(f"need 0 <= lo < hi <= 1, got [{lo}, {hi}]")
    if jm_binarized_feasible(states, hi):
        return hi
    if not jm_binarized_feasible(states, lo):
        raise SolverError(f"binarizations are not jointly measurable at the lower end v={lo}")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if jm_binarized_feasible(states, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
