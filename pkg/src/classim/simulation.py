"""Classical models for state sets and the visibility linear program.

A device is an orthonormal basis together with an ``r``-element subset of
its vectors; a :class:`ClassicalModel` mixes devices with weights ``q`` and,
for every state ``x``, a distribution over the device's subset. The linear
program built by :func:`build_simulation_lp` finds the largest isotropic
visibility at which a given device family reproduces the set.
"""
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from classim.errors import SizingError, SolverError, ValidationError
from classim.linalg import hermitian_stack_to_real, sample_haar_unitaries, random_hermitian, unitary_exp
from classim.solvers.lp import LpProblem, solve_lp
from classim.states import StateSet, matrix_from_json, matrix_to_json

VARIABLE_CAP = 200_000
SUPPORT_TOL = 1e-12
MODEL_TOL = 1e-9
RESIDUAL_TOL = 1e-7


class Device:
    """Orthonormal basis (columns of ``basis``) restricted to ``subset``."""

    def __init__(self, basis, subset=None):
        u = np.array(basis, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValidationError(f"device basis must be square, got {u.shape}")
        d = u.shape[0]
        if np.abs(u.conj().T @ u - np.eye(d)).max() > 1e-10:
            raise ValidationError("device basis is not unitary")
        subset = tuple(range(d)) if subset is None else tuple(sorted(int(i) for i in subset))
        if not subset or len(set(subset)) != len(subset) or subset[0] < 0 or subset[-1] >= d:
            raise ValidationError(f"invalid subset {subset} for d={d}")
        u.setflags(write=False)
        self.basis = u
        self.subset = subset

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def r(self):
        return len(self.subset)

    def vectors(self):
        return self.basis[:, list(self.subset)]

    def projectors(self):
        """``(r, d, d)`` rank-one projectors onto the subset vectors."""
        v = self.vectors()
        return np.einsum("ik,jk->kij", v, v.conj())

    def with_basis(self, u):
        return Device(u, self.subset)

    def to_dict(self):
        return {"basis": matrix_to_json(self.basis), "subset": list(self.subset)}

    @classmethod
    def from_dict(cls, data):
        return cls(matrix_from_json(data["basis"]), data["subset"])

    def __repr__(self):
        return f"Device(d={self.dim}, subset={self.subset})"


class ClassicalModel:
    """Finite classical model: devices, weights and conditional distributions.

    Parameters
    ----------
    devices : list of Device
    weights : array_like
        ``q(lambda)``, nonnegative and summing to one.
    cond : list of ndarray
        ``cond[lam][x, k]`` is ``p(k | x, lambda)`` over the subset of device
        ``lam``.
    """

    def __init__(self, devices, weights, cond, tol=MODEL_TOL):
        devices = list(devices)
        if not devices:
            raise ValidationError("a classical model needs at least one device")
        d = devices[0].dim
        if any(dev.dim != d for dev in devices):
            raise ValidationError("devices must share a dimension")
        q = np.asarray(weights, dtype=float).reshape(-1)
        if q.size != len(devices):
            raise ValidationError("one weight per device required")
        if q.min() < -tol or abs(q.sum() - 1.0) > tol:
            raise ValidationError(f"weights must be a distribution (sum {q.sum():.12g})")
        cond = [np.asarray(c, dtype=float) for c in cond]
        if len(cond) != len(devices):
            raise ValidationError("one conditional table per device required")
        m = cond[0].shape[0]
        for lam, (c, dev) in enumerate(zip(cond, devices)):
            if c.shape != (m, dev.r):
                raise ValidationError(f"cond[{lam}] has shape {c.shape}, expected {(m, dev.r)}")
            if c.min() < -tol or np.abs(c.sum(axis=1) - 1.0).max() > tol:
                raise ValidationError(f"cond[{lam}] rows are not distributions")
        self.devices = devices
        self.weights = q
        self.cond = cond

    @property
    def dim(self):
        return self.devices[0].dim

    @property
    def n_states(self):
        return self.cond[0].shape[0]

    @property
    def n_devices(self):
        return len(self.devices)

    def reconstruct_all(self):
        """``(m, d, d)`` array of the states produced by the model."""
        out = np.zeros((self.n_states, self.dim, self.dim), dtype=complex)
        for q, dev, c in zip(self.weights, self.devices, self.cond):
            out += q * np.einsum("xk,kij->xij", c, dev.projectors())
        return out

    def to_dict(self):
        return {"dim": self.dim,
                "devices": [dev.to_dict() for dev in self.devices],
                "weights": self.weights.tolist(),
                "cond": [c.tolist() for c in self.cond]}

    @classmethod
    def from_dict(cls, data):
        try:
            devs = [Device.from_dict(x) for x in data["devices"]]
            model = cls(devs, data["weights"], [np.array(c) for c in data["cond"]])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed classical model: {exc}") from exc
        if int(data.get("dim", model.dim)) != model.dim:
            raise ValidationError("declared dim does not match devices")
        return model

    def __repr__(self):
        return f"ClassicalModel(d={self.dim}, devices={self.n_devices}, states={self.n_states})"


@dataclass
class SimulationResult:
    visibility: float
    model: ClassicalModel
    residual: float
    gap: float
    description: str = ""
    lp_residual: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = self.model.to_dict()
        out.update({"visibility": self.visibility, "residual": self.residual, "gap": self.gap,
                    "lp_residual": self.lp_residual, "description": self.description})
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class LpLayout:
    """Column offsets of the simulation LP variables."""

    n_devices: int
    m: int
    offsets: tuple
    ranks: tuple

    @property
    def n_vars(self):
        return 1 + self.n_devices + sum(self.m * r for r in self.ranks)

    def q_index(self, lam):
        return 1 + lam

    def p_slice(self, lam):
        s = self.offsets[lam]
        return slice(s, s + self.m * self.ranks[lam])


def reconstruct(model, x):
    """State number ``x`` produced by ``model``."""
    if not 0 <= x < model.n_states:
        raise IndexError(f"state index {x} out of range")
    out = np.zeros((model.dim, model.dim), dtype=complex)
    for q, dev, c in zip(model.weights, model.devices, model.cond):
        out += q * np.einsum("k,kij->ij", c[x], dev.projectors())
    return out


def noisy_targets(states, v):
    d = states.dim
    return v * states.states + (1.0 - v) / d * np.eye(d)


def reconstruction_residual(model, states, v):
    """Largest Frobenius distance between model output and the noisy set."""
    diff = model.reconstruct_all() - noisy_targets(states, v)
    return float(np.linalg.norm(diff, axis=(1, 2)).max())


def build_simulation_lp(states, devices, cap=VARIABLE_CAP):
    """Linear program maximizing the visibility reproducible by ``devices``.

    Variables are ``(v, q, p~)`` in that order, with ``p~`` grouped by device,
    then state, then subset element. Returns ``(LpProblem, LpLayout)``.
    """
    devices = list(devices)
    if not devices:
        raise ValidationError("empty device list")
    d, m = states.dim, states.m
    if any(dev.dim != d for dev in devices):
        raise ValidationError("device dimension differs from the state set")
    ranks = tuple(dev.r for dev in devices)
    n_dev = len(devices)
    offsets, pos = [], 1 + n_dev
    for r in ranks:
        offsets.append(pos)
        pos += m * r
    layout = LpLayout(n_dev, m, tuple(offsets), ranks)
    n = layout.n_vars
    if n > cap:
        raise SizingError(f"simulation LP would have {n} variables (cap {cap})")

    d2 = d * d
    eye_vec = hermitian_stack_to_real(np.eye(d) / d)
    rows, cols, vals = [], [], []
    # matrix equalities: v (rho_x - I/d) - sum p~ P = -I/d
    rho_vec = hermitian_stack_to_real(states.states) - eye_vec
    rows.append(np.arange(m * d2))
    cols.append(np.zeros(m * d2, dtype=int))
    vals.append(rho_vec.reshape(-1))
    n_match = m * d2
    marg_row = n_match
    for lam, dev in enumerate(devices):
        r = dev.r
        pv = hermitian_stack_to_real(dev.projectors())  # (r, d2)
        base = offsets[lam]
        xs, ks, ts = np.meshgrid(np.arange(m), np.arange(r), np.arange(d2), indexing="ij")
        vv = -pv[ks, ts]
        keep = np.abs(vv) > 1e-15
        rows.append((xs * d2 + ts)[keep])
        cols.append((base + xs * r + ks)[keep])
        vals.append(vv[keep])
        # marginals: sum_k p~(k|x) - q = 0
        xr = np.repeat(np.arange(m), r)
        rows.append(marg_row + xr)
        cols.append(base + np.arange(m * r))
        vals.append(np.ones(m * r))
        rows.append(marg_row + np.arange(m))
        cols.append(np.full(m, 1 + lam))
        vals.append(-np.ones(m))
        marg_row += m
    norm_row = marg_row
    rows.append(np.full(n_dev, norm_row))
    cols.append(1 + np.arange(n_dev))
    vals.append(np.ones(n_dev))
    n_rows = norm_row + 1

    a = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, n))
    b = np.zeros(n_rows)
    b[:n_match] = -np.tile(eye_vec, m)
    b[norm_row] = 1.0
    c = np.zeros(n)
    c[0] = 1.0
    upper = np.full(n, np.inf)
    upper[0] = 1.0
    return LpProblem(c, a, b, np.zeros(n), upper, maximize=True), layout


def model_from_lp(x, layout, devices):
    """Extract a :class:`ClassicalModel` from an LP solution vector."""
    q = np.clip(x[1:1 + layout.n_devices], 0.0, None)
    keep = np.flatnonzero(q > SUPPORT_TOL)
    if keep.size == 0:
        raise SolverError("LP solution has no device with positive weight")
    devs, cond = [], []
    for lam in keep:
        p = np.clip(x[layout.p_slice(lam)].reshape(layout.m, layout.ranks[lam]), 0.0, None)
        sums = p.sum(axis=1, keepdims=True)
        p = np.where(sums > 0, p / np.where(sums > 0, sums, 1.0), 1.0 / layout.ranks[lam])
        devs.append(devices[lam])
        cond.append(p)
    w = q[keep] / q[keep].sum()
    return ClassicalModel(devs, w, cond)


def simulate(states, devices, cap=VARIABLE_CAP, description=""):
    """Maximal visibility at which ``devices`` reproduce the noisy set.

    Returns
    -------
    SimulationResult
    """
    devices = list(devices)
    lp, layout = build_simulation_lp(states, devices, cap)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise SolverError(f"simulation LP ended with status {sol.status}")
    v = float(np.clip(sol.x[0], 0.0, 1.0))
    model = model_from_lp(sol.x, layout, devices)
    resid = reconstruction_residual(model, states, v)
    if resid > RESIDUAL_TOL:
        raise SolverError("extracted model does not reproduce the set", residual=resid)
    return SimulationResult(v, model, resid, sol.gap, description or f"{len(devices)} devices",
                            lp_residual=sol.residual, extra={"lp_iterations": sol.iterations})


def random_device_family(d, r, n, seed):
    """``n`` Haar-random bases, each expanded to every ``r``-subset.

    Families drawn with the same seed are nested: the first ``k`` unitaries
    of a larger family equal those of a family of size ``k``.
    """
    if n < 1:
        raise ValidationError("need at least one unitary")
    if not 1 <= r <= d:
        raise ValidationError(f"need 1 <= r <= d, got r={r}, d={d}")
    rng = np.random.default_rng(seed)
    us = sample_haar_unitaries(d, n, rng)
    subsets = list(itertools.combinations(range(d), r))
    return [Device(u, s) for u in us for s in subsets]


def devices_from_bases(bases, r=None):
    """One device per ``(basis, r-subset)`` pair, subsets in lexicographic order."""
    out = []
    for u in bases:
        u = np.asarray(u, dtype=complex)
        d = u.shape[0]
        rr = d if r is None else r
        out.extend(Device(u, s) for s in itertools.combinations(range(d), rr))
    return out


def refine_devices(states, devices, iterations, step=0.1, seed=0, mode="local", cap=VARIABLE_CAP):
    """Random-perturbation hill climbing over the device bases.

    Each iteration proposes new bases and keeps them only if the LP optimum
    does not decrease. In ``local`` mode every basis ``U`` becomes
    ``exp(i step H) U`` with its own random Hermitian ``H``; in ``global``
    mode one unitary ``A`` acts on all devices as ``A U A^dagger``.

    Returns
    -------
    SimulationResult
        The best result seen; ``extra["history"]`` lists the accepted
        visibility after each iteration.
    """
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    if mode not in ("local", "global"):
        raise ValidationError(f"unknown refinement mode {mode!r}")
    rng = np.random.default_rng(seed)
    devices = list(devices)
    best = simulate(states, devices, cap)
    history = [best.visibility]
    d = states.dim
    for _ in range(iterations):
        if mode == "global":
            a = unitary_exp(random_hermitian(d, rng), step)
            proposal = [dev.with_basis(a @ dev.basis @ a.conj().T) for dev in devices]
        else:
            cache = {}
            proposal = []
            for dev in devices:
                # subsets of one basis move together
                key = id(dev.basis)
                if key not in cache:
                    cache[key] = unitary_exp(random_hermitian(d, rng), step) @ dev.basis
                proposal.append(dev.with_basis(cache[key]))
        try:
            trial = simulate(states, proposal, cap)
        except SolverError:
            history.append(best.visibility)
            continue
        if trial.visibility >= best.visibility:
            best, devices = trial, proposal
        history.append(best.visibility)
    best.extra["history"] = history
    best.description = f"{len(devices)} devices, {iterations} {mode} refinement steps"
    return best


def predict_statistics(model, measurements):
    """Outcome table ``p[b, x, y]`` of the model under each measurement.

    All measurements must have the same number of outcomes.
    """
    n_b = {meas.n_outcomes for meas in measurements}
    if len(n_b) != 1:
        raise ValidationError("measurements must share an outcome count")
    if any(meas.dim != model.dim for meas in measurements):
        raise ValidationError("measurement dimension differs from the model")
    eff = np.array([meas.effects for meas in measurements])  # (y, b, d, d)
    out = np.zeros((n_b.pop(), model.n_states, len(measurements)))
    for q, dev, c in zip(model.weights, model.devices, model.cond):
        v = dev.vectors()
        # <e_k| M_{b|y} |e_k>
        diag = np.real(np.einsum("ik,ybij,jk->byk", v.conj(), eff, v))
        out += q * np.einsum("xk,byk->bxy", c, diag)
    return out


def bb84_devices():
    """The two qubit bases rotated by +-pi/8 that simulate noisy BB84 states."""
    c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
    phi = np.array([[c, s], [s, -c]])
    chi = np.array([[c, s], [-s, c]])
    return [Device(phi), Device(chi)]


def bb84_model():
    """Hardcoded two-device model of the BB84 set at visibility ``1/sqrt(2)``.

    State order follows :func:`classim.states.gen_bb84`: ``0, 1, +, -``.
    """
    hit = {0: (0, 0), 1: (1, 1), 2: (0, 1), 3: (1, 0)}
    cond = [np.zeros((4, 2)), np.zeros((4, 2))]
    for x, (ka, kb) in hit.items():
        cond[0][x, ka] = 1.0
        cond[1][x, kb] = 1.0
    return ClassicalModel(bb84_devices(), [0.5, 0.5], cond)


def load_devices(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    items = data["devices"] if isinstance(data, dict) else data
    return [Device.from_dict(x) for x in items]


def save_devices(devices, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"devices": [dev.to_dict() for dev in devices]}, fh, indent=1)


def count_variables(m, ranks):
    return 1 + len(ranks) + m * sum(ranks)


def subset_count(d, r):
    return math.comb(d, r)


__all__ = [
    "Device", "ClassicalModel", "SimulationResult", "build_simulation_lp", "simulate",
    "random_device_family", "refine_devices", "reconstruct", "predict_statistics",
    "bb84_devices", "bb84_model", "devices_from_bases", "reconstruction_residual",
    "noisy_targets", "StateSet",
]
