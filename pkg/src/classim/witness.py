"""Linear witnesses and their classical bounds.

A witness assigns real weights ``c[b, x, y]`` to the statistics
``tr(rho_x M_{b|y})``. Its classical bound is the largest value reachable by
states that are jointly diagonal per device. Every classical value is a
convex combination of deterministic strategies ``x -> i`` assigning each
state to one vector of a common basis, and the bound for a strategy is
relaxed to a small semidefinite program over "basis-like" operators
``E_i >= 0, tr E_i = 1, sum_i E_i = I``. The relaxation can only exceed the
true value, so the reported bound is an upper bound.
"""
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from classim import kernels
from classim.errors import SizingError, SolverError, ValidationError
from classim.solvers.sdp import MAX_ITER, PreparedSdp, SdpBuilder
from classim.states import StateSet, gen_mub_bases, povms_from_json, povms_to_json

STRATEGY_CAP = 2_000_000
BATCH_SIZE = 1000
CHECKPOINT_EVERY = 1000
RETRY_MAX_ITER = 4 * MAX_ITER
BOUND_SLACK = 1e-6

SDP_RELAXATION = "sdp_relaxation"
QUBIT_EXACT = "qubit_exact"


class Witness:
    """Linear functional ``sum c[b, x, y] tr(rho_x M_{b|y})``.

    Parameters
    ----------
    measurements : list of Povm
        Measurements indexed by ``y``; all must have the same number of
        outcomes.
    coefficients : array_like
        Real array of shape ``(n_outcomes, m, n_measurements)``.
    """

    def __init__(self, measurements, coefficients):
        meas = list(measurements)
        if not meas:
            raise ValidationError("a witness needs at least one measurement")
        d = meas[0].dim
        if any(mm.dim != d for mm in meas):
            raise ValidationError("measurements must share a dimension")
        n_b = meas[0].n_outcomes
        if any(mm.n_outcomes != n_b for mm in meas):
            raise ValidationError("measurements must have the same number of outcomes")
        c = np.array(coefficients, dtype=float)
        if c.ndim != 3 or c.shape[0] != n_b or c.shape[2] != len(meas) or c.shape[1] < 1:
            raise ValidationError(
                f"coefficients must have shape ({n_b}, m, {len(meas)}), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("coefficients must be finite")
        c.setflags(write=False)
        self.measurements = meas
        self.coefficients = c

    @property
    def dim(self):
        return self.measurements[0].dim

    @property
    def m(self):
        return self.coefficients.shape[1]

    def __repr__(self):
        return f"Witness(d={self.dim}, m={self.m}, measurements={len(self.measurements)})"

    def effects(self):
        """``(n_outcomes, n_measurements, d, d)`` stack of ``M_{b|y}``."""
        return np.stack([mm.effects for mm in self.measurements], axis=1)

    def to_dict(self):
        return {"dim": self.dim,
                "coefficients": self.coefficients.tolist(),
                "measurements": povms_to_json(self.measurements)}

    @classmethod
    def from_dict(cls, data):
        try:
            w = cls(povms_from_json(data["measurements"]), data["coefficients"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed witness: {exc}") from exc
        if int(data.get("dim", w.dim)) != w.dim:
            raise ValidationError("declared dim does not match measurements")
        return w

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def fingerprint(self):
        """Short hash identifying the witness data (used by checkpoints)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.coefficients).tobytes())
        h.update(np.ascontiguousarray(self.effects()).tobytes())
        return h.hexdigest()[:16]


def evaluate(w, states):
    """Value of the witness on a state set."""
    if states.dim != w.dim or states.m != w.m:
        raise ValidationError(
            f"witness expects m={w.m}, d={w.dim}; got m={states.m}, d={states.dim}")
    probs = np.real(np.einsum("xij,byji->bxy", states.states, w.effects()))
    return float((w.coefficients * probs).sum())


def reduced_operators(w):
    """``(m, d, d)`` operators ``O_x = sum_{b,y} c[b, x, y] M_{b|y}``."""
    return np.einsum("bxy,byij->xij", w.coefficients, w.effects())


def strategy_count(m, d, symmetry_reduce=False):
    """Number of strategies :func:`enumerate_strategies` would produce."""
    if not symmetry_reduce:
        return d ** m
    # Stirling numbers of the second kind, S(m, k) for k <= d
    row = [1] + [0] * d
    for _ in range(m):
        row = [0] + [k * row[k] + row[k - 1] for k in range(1, d + 1)]
    return sum(row)


def strategy_array(m, d, symmetry_reduce=False, cap=STRATEGY_CAP):
    """All strategies as an ``(S, m)`` integer array (values ``0..d-1``).

    Without reduction the rows are every assignment in lexicographic order.
    With reduction only first-occurrence relabelings are kept, one per orbit
    of the permutations of the values.
    """
    if m < 1 or d < 1:
        raise ValidationError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    count = strategy_count(m, d, symmetry_reduce)
    if count > cap:
        hint = "" if symmetry_reduce else "; consider symmetry reduction"
        raise SizingError(f"{count} strategies exceed the cap of {cap}{hint}")
    if symmetry_reduce:
        return np.asarray(kernels.restricted_growth_strings(m, d), dtype=np.int64)
    idx = np.arange(count, dtype=np.int64)
    powers = d ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers) % d


def enumerate_strategies(m, d, symmetry_reduce=False, cap=STRATEGY_CAP):
    """Iterate over strategies as tuples of values in ``0..d-1``."""
    for row in strategy_array(m, d, symmetry_reduce, cap):
        yield tuple(int(v) for v in row)


def _strategy_sdp(d):
    b = SdpBuilder()
    blocks = [b.add_block(d) for _ in range(d)]
    for k in blocks:
        b.add_constraint({k: np.eye(d)}, 1.0)
    b.add_matrix_equality({k: 1.0 for k in blocks}, np.eye(d))
    p = b.build(maximize=True)
    return PreparedSdp.from_problem(p), p.rhs


def _strategy_costs(ops, strategies, d):
    """``(d, S, d, d)`` costs ``Q_i = sum_{x: s(x) = i} O_x`` for a batch."""
    s = np.asarray(strategies)
    onehot = np.zeros(s.shape + (d,))
    np.put_along_axis(onehot, s[..., None], 1.0, axis=-1)
    return np.einsum("sxi,xab->isab", onehot, ops)


def strategy_bound_sdp(w, strategy):
    """Relaxed value of one deterministic strategy.

    Raises
    ------
    SolverError
        If the relaxation cannot be solved to certified accuracy.
    """
    s = np.asarray(strategy, dtype=np.int64)
    if s.shape != (w.m,) or s.min() < 0 or s.max() >= w.dim:
        raise ValidationError(f"strategy must be {w.m} values in 0..{w.dim - 1}")
    prep, rhs = _strategy_sdp(w.dim)
    vals, gaps = _solve_batch(prep, rhs, reduced_operators(w), s[None, :], w.dim)
    return float(vals[0])


def _solve_batch(prep, rhs, ops, strategies, d):
    """Solve a batch of strategy relaxations, retrying failures one by one."""
    q = _strategy_costs(ops, strategies, d)
    res = prep.solve(list(q), rhs, True)
    vals = np.array(res.objective, dtype=float)
    gaps = np.array(res.gap, dtype=float)
    for i in np.flatnonzero(res.status != "optimal"):
        single = prep.solve([qi[i] for qi in q], rhs, True, max_iter=RETRY_MAX_ITER)
        if single.status[0] != "optimal":
            raise SolverError(
                f"strategy relaxation not certified for {tuple(int(v) for v in strategies[i])}",
                strategy=[int(v) for v in strategies[i]], status=str(single.status[0]),
                gap=float(single.gap[0]), residual=float(single.residual[0]))
        vals[i] = single.objective[0]
        gaps[i] = single.gap[0]
    return vals, gaps


@dataclass
class WitnessBound:
    """Classical bound of a witness.

    ``beta`` is the maximum over the evaluated strategies; for the
    relaxation method it bounds the true classical value from above, up to
    ``tolerance``.
    """

    beta: float
    method: str
    n_strategies: int
    argmax: tuple
    tolerance: float = 0.0
    max_gap: float = 0.0
    values: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        out = {"method": self.method, "beta": self.beta, "n_strategies": self.n_strategies,
               "argmax": [int(v) for v in self.argmax], "tolerance": self.tolerance,
               "max_gap": self.max_gap}
        if self.values is not None:
            out["values"] = np.asarray(self.values).tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            values = data.get("values")
            return cls(float(data["beta"]), str(data["method"]), int(data["n_strategies"]),
                       tuple(int(v) for v in data["argmax"]), float(data.get("tolerance", 0.0)),
                       float(data.get("max_gap", 0.0)),
                       None if values is None else np.asarray(values, dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed witness bound: {exc}") from exc

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _read_checkpoint(path, key):
    if path is None or not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("key") != key:
        raise ValidationError(f"checkpoint {path} belongs to a different run")
    return data


def _write_checkpoint(path, state):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state, fh)
    os.replace(tmp, path)


def classical_bound(w, symmetry_reduce=True, cap=STRATEGY_CAP, batch_size=BATCH_SIZE,
                    checkpoint=None, keep_values=False, progress=None):
    """Maximum of the strategy relaxations over all deterministic strategies.

    Parameters
    ----------
    w : Witness
    symmetry_reduce : bool
        Evaluate one strategy per relabeling orbit. The relaxation is
        invariant under relabeling, so the maximum is unchanged.
    cap : int
        Largest admissible number of strategies.
    batch_size : int
        Strategies solved together in one batched interior-point run.
    checkpoint : str, optional
        JSON file holding the running maximum, rewritten after every
        ``CHECKPOINT_EVERY`` strategies. An existing file for the same
        witness and options is resumed.
    keep_values : bool
        Return the per-strategy values (not stored in checkpoints).
    progress : callable, optional
        Called as ``progress(done, total)`` after each batch.

    Returns
    -------
    WitnessBound
    """
    strategies = strategy_array(w.m, w.dim, symmetry_reduce, cap)
    total = len(strategies)
    ops = reduced_operators(w)
    prep, rhs = _strategy_sdp(w.dim)
    key = f"{w.fingerprint()}:{int(bool(symmetry_reduce))}:{total}"
    state = _read_checkpoint(checkpoint, key)
    if state is None or keep_values:
        state = {"key": key, "done": 0, "beta": -math.inf, "argmax": None, "max_gap": 0.0}
    values = np.full(total, np.nan) if keep_values else None
    since = 0
    start = state["done"]
    for lo in range(start, total, batch_size):
        hi = min(lo + batch_size, total)
        vals, gaps = _solve_batch(prep, rhs, ops, strategies[lo:hi], w.dim)
        if keep_values:
            values[lo:hi] = vals
        k = int(np.argmax(vals))
        if vals[k] > state["beta"]:
            state["beta"] = float(vals[k])
            state["argmax"] = [int(v) for v in strategies[lo + k]]
        state["max_gap"] = max(state["max_gap"], float(gaps.max()))
        state["done"] = hi
        since += hi - lo
        if checkpoint is not None and (since >= CHECKPOINT_EVERY or hi == total):
            _write_checkpoint(checkpoint, state)
            since = 0
        if progress is not None:
            progress(hi, total)
    beta = state["beta"]
    tol = BOUND_SLACK + state["max_gap"] * (1.0 + abs(beta))
    return WitnessBound(beta, SDP_RELAXATION, total, tuple(state["argmax"]), tol,
                        state["max_gap"], values)


def sign_witness(s, measurements):
    """Witness ``c[b, x, y] = (-1)^b s[x, y]`` for two-outcome measurements."""
    s = np.asarray(s, dtype=float)
    meas = list(measurements)
    if s.ndim != 2 or s.shape[1] != len(meas):
        raise ValidationError(f"s must have shape (m, {len(meas)}), got {s.shape}")
    return Witness(meas, np.stack([s, -s]))


def qubit_exact_bound(s, measurements):
    """Exact classical bound of a qubit sign witness.

    With ``c[b, x, y] = (-1)^b s[x, y]`` and rank-one projective qubit
    measurements, the bound is the largest eigenvalue of
    ``sum_x a_x sum_y s[x, y] (M_{0|y} - M_{1|y})`` maximized over signs
    ``a``. The argmax strategy maps ``a_x = +1`` to basis vector 0.
    """
    meas = list(measurements)
    s = np.asarray(s, dtype=float)
    if any(mm.dim != 2 or mm.n_outcomes != 2 for mm in meas):
        raise ValidationError("qubit_exact_bound needs two-outcome qubit measurements")
    if not all(mm.is_rank_one_projective() for mm in meas):
        raise ValidationError("qubit_exact_bound needs rank-one projective measurements")
    if s.ndim != 2 or s.shape[1] != len(meas):
        raise ValidationError(f"s must have shape (m, {len(meas)}), got {s.shape}")
    diffs = np.array([mm.effects[0] - mm.effects[1] for mm in meas])
    ops = np.einsum("xy,yij->xij", s, diffs)
    best, signs = kernels.max_lambda_signs(np.ascontiguousarray(ops, dtype=complex))
    argmax = tuple(0 if a > 0 else 1 for a in signs)
    return WitnessBound(float(best), QUBIT_EXACT, 2 ** s.shape[0], argmax)


def mub_witness(d=3, n_bases=2):
    """Witness summing the probabilities ``p(b = k | (j, k), y = j)``.

    The states are indexed ``(j, k)`` basis-major; the measurements are the
    first ``n_bases`` mutually unbiased bases. The matching pure states reach
    the value ``d * n_bases``.
    """
    bases = gen_mub_bases(d)
    if not 1 <= n_bases <= len(bases):
        raise ValidationError(f"need 1 <= N <= {len(bases)} for d={d}, got {n_bases}")
    c = np.zeros((d, d * n_bases, n_bases))
    for j in range(n_bases):
        for k in range(d):
            c[k, j * d + k, j] = 1.0
    return Witness(bases[:n_bases], c)


def critical_visibility(w, target, beta):
    """Visibility at which the noisy target reaches the value ``beta``.

    Solves ``v W(target) + (1 - v) W(I/d) = beta``.

    Raises
    ------
    ValidationError
        If the witness does not separate the target from white noise or the
        crossing lies outside ``[0, 1]``.
    """
    d = target.dim
    mixed = StateSet(np.broadcast_to(np.eye(d) / d, target.states.shape))
    wt = evaluate(w, target)
    wm = evaluate(w, mixed)
    if not wt > wm:
        raise ValidationError(f"witness does not separate the target ({wt}) from noise ({wm})")
    v = (beta - wm) / (wt - wm)
    if not -1e-12 <= v <= 1.0 + 1e-12:
        raise ValidationError(f"no crossing in [0, 1]: beta={beta}, range [{wm}, {wt}]")
    return float(min(max(v, 0.0), 1.0))
