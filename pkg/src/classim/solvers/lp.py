"""Revised simplex for equality-form linear programs with variable bounds.

The solver works on ``A x = b, l <= x <= u`` directly (bounded-variable
simplex), so no slack rows are introduced for upper bounds. A two-phase
scheme starts from an artificial basis; artificials still basic after
phase 1 are pinned to ``[0, 0]`` and pivot out as the basis changes.

The basis is held as a sparse LU factorization refreshed every
``REFACTOR_EVERY`` pivots, with product-form eta updates in between.
"""
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from classim.errors import SolverError, ValidationError

REFACTOR_EVERY = 50
FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-10
DEGENERATE_LIMIT = 50
RESIDUAL_CERT = 1e-8
GAP_CERT = 1e-7

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3


@dataclass(frozen=True)
class LpProblem:
    """``optimize c'x`` subject to ``A_eq x = b_eq`` and ``lower <= x <= upper``.

    ``A_eq`` may be dense or any ``scipy.sparse`` matrix. ``lower`` defaults
    to zero and ``upper`` to ``+inf``; ``-inf`` lower bounds mark free
    variables.
    """

    c: np.ndarray
    A_eq: object
    b_eq: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    maximize: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        a = sp.csc_matrix(self.A_eq, dtype=float, copy=True)
        a.eliminate_zeros()
        b = np.asarray(self.b_eq, dtype=float).reshape(-1)
        n = c.size
        if a.shape[1] != n:
            raise ValidationError(f"A_eq has {a.shape[1]} columns but c has {n} entries")
        if a.shape[0] != b.size:
            raise ValidationError(f"A_eq has {a.shape[0]} rows but b_eq has {b.size} entries")
        lo = np.zeros(n) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        hi = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if np.any(lo > hi) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValidationError("inconsistent variable bounds")
        for arr in (c, b, a.data):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", a)
        object.__setattr__(self, "b_eq", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def shape(self):
        return self.A_eq.shape


@dataclass
class LpSolution:
    """Result of :func:`solve_lp`.

    ``y`` and ``reduced_costs`` are the multipliers of the problem as posed:
    at an optimum of a maximization, ``c - A'y`` is ``<= 0`` on variables at
    their lower bound.
    """

    status: str
    x: np.ndarray
    objective: float
    y: np.ndarray
    reduced_costs: np.ndarray
    residual: float
    gap: float
    dual_infeasibility: float
    iterations: int
    trace: list = field(default_factory=list, repr=False)


class _Basis:
    """Sparse LU of the basis matrix plus an eta file."""

    def __init__(self, a_ext, cols):
        self.m = a_ext.shape[0]
        mat = a_ext[:, cols].tocsc()
        try:
            self.lu = spla.splu(mat, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError("singular basis matrix", detail=str(exc)) from exc
        self.etas = []

    def ftran(self, v):
        z = self.lu.solve(v)
        for r, a in self.etas:
            zr = z[r] / a[r]
            z -= a * zr
            z[r] = zr
        return z

    def btran(self, v):
        w = np.array(v, dtype=float)
        for r, a in reversed(self.etas):
            s = a @ w
            w[r] = (w[r] - (s - a[r] * w[r])) / a[r]
        return self.lu.solve(w, trans="T")

    def update(self, r, alpha):
        self.etas.append((r, alpha.copy()))


class _Simplex:
    def __init__(self, p):
        self.p = p
        m, n = p.shape
        self.m, self.n = m, n
        lo, hi = p.lower, p.upper
        x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        r = p.b_eq - p.A_eq @ x0
        sign = np.where(r >= 0, 1.0, -1.0)
        art = sp.diags(sign, format="csc", shape=(m, m))
        self.A = sp.hstack([p.A_eq, art], format="csc")
        self.AT = self.A.T.tocsr()
        self.lo = np.concatenate([lo, np.zeros(m)])
        self.hi = np.concatenate([hi, np.full(m, np.inf)])
        self.x = np.concatenate([x0, np.abs(r)])
        self.status = np.where(np.isfinite(lo), AT_LOWER, np.where(np.isfinite(hi), AT_UPPER, FREE))
        self.status = np.concatenate([self.status, np.full(m, BASIC)])
        self.basis = np.arange(n, n + m)
        self._crash(np.abs(r) <= 1e-14 * (1.0 + np.abs(p.b_eq)))
        self.eligible = np.ones(n + m, dtype=bool)
        self.factor = None
        self.iterations = 0
        self.trace = []

    def _crash(self, zero_rows):
        """Swap artificials of zero-residual rows for structural columns.

        Chosen columns keep their bound values, so the basic solution is
        unchanged; each new column is zero on all previously chosen rows,
        which keeps the basis triangular and hence nonsingular.
        """
        a = self.p.A_eq
        n = self.n
        chosen_row = np.zeros(self.m, dtype=bool)
        used = np.zeros(n, dtype=bool)
        rows = a.tocsr()
        nnz = np.diff(a.indptr)
        for i in np.flatnonzero(zero_rows):
            s, e = rows.indptr[i], rows.indptr[i + 1]
            cand = rows.indices[s:e]
            vals = np.abs(rows.data[s:e])
            if cand.size == 0 or vals.max() == 0.0:
                continue
            big = vals >= 0.1 * vals.max()
            best = -1
            for j in cand[big][np.argsort(nnz[cand[big]], kind="stable")]:
                if used[j] or self.lo[j] == self.hi[j]:
                    continue
                rj = a.indices[a.indptr[j]:a.indptr[j + 1]]
                if chosen_row[rj].any():
                    continue
                best = j
                break
            if best < 0:
                continue
            used[best] = True
            chosen_row[i] = True
            art = n + i
            self.basis[i] = best
            self.status[best] = BASIC
            self.status[art] = AT_LOWER
            self.x[art] = 0.0

    def column(self, j):
        s, e = self.A.indptr[j], self.A.indptr[j + 1]
        col = np.zeros(self.m)
        col[self.A.indices[s:e]] = self.A.data[s:e]
        return col

    def refactor(self):
        self.factor = _Basis(self.A, self.basis)
        nonbasic = self.status != BASIC
        rhs = self.p.b_eq - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.factor.ftran(rhs)

    def duals(self, cost):
        y = self.factor.btran(cost[self.basis])
        return y, cost - self.AT @ y

    def run(self, cost, max_iter, phase, trace_every):
        """Iterate to optimality for ``cost``; returns 'optimal' or 'unbounded'.

        Pricing is Dantzig's rule. Duals are updated from the pivot row and
        recomputed from scratch at every refactorization and before
        optimality is declared.
        """
        degenerate = 0
        bland = False
        lo, hi, x = self.lo, self.hi, self.x
        y = d = None
        while True:
            if self.factor is None or len(self.factor.etas) >= REFACTOR_EVERY:
                self.refactor()
                y = None
            if y is None:
                y, d = self.duals(cost)
            st = self.status
            inc = ((st == AT_LOWER) | (st == FREE)) & (d < -DUAL_TOL)
            dec = ((st == AT_UPPER) | (st == FREE)) & (d > DUAL_TOL)
            cand = (inc | dec) & self.eligible & (hi > lo)
            if trace_every and self.iterations % trace_every == 0:
                self.trace.append(self._log(cost, y, d, phase))
            if not cand.any():
                # confirm against fresh duals before declaring optimality
                y, d = self.duals(cost)
                inc = ((st == AT_LOWER) | (st == FREE)) & (d < -DUAL_TOL)
                dec = ((st == AT_UPPER) | (st == FREE)) & (d > DUAL_TOL)
                cand = (inc | dec) & self.eligible & (hi > lo)
                if not cand.any():
                    return "optimal"
            if self.iterations >= max_iter:
                raise SolverError("simplex iteration cap reached", iterations=self.iterations,
                                  trace=self.trace[-5:])
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            direction = 1.0 if d[j] < 0 else -1.0
            alpha = self.factor.ftran(self.column(j))
            delta = direction * alpha
            xb = x[self.basis]
            lb, ub = lo[self.basis], hi[self.basis]

            # Harris two-pass ratio test
            with np.errstate(divide="ignore", invalid="ignore"):
                dn = delta > PIVOT_TOL
                up = delta < -PIVOT_TOL
                relaxed = np.full(self.m, np.inf)
                relaxed[dn] = (xb[dn] - lb[dn] + HARRIS_TOL) / delta[dn]
                relaxed[up] = (ub[up] - xb[up] + HARRIS_TOL) / -delta[up]
                exact = np.full(self.m, np.inf)
                exact[dn] = (xb[dn] - lb[dn]) / delta[dn]
                exact[up] = (ub[up] - xb[up]) / -delta[up]
            tmax = relaxed.min()
            span = hi[j] - lo[j]
            if not np.isfinite(tmax) and not np.isfinite(span):
                return "unbounded"
            if span <= tmax:
                t, leave = span, -1
            else:
                ties = np.flatnonzero(exact <= tmax)
                if bland:
                    best = ties[exact[ties] <= exact[ties].min() + HARRIS_TOL]
                    leave = int(best[np.argmin(self.basis[best])])
                else:
                    leave = int(ties[np.argmax(np.abs(delta[ties]))])
                t = max(exact[leave], 0.0)

            x[self.basis] = xb - t * delta
            x[j] += direction * t
            self.iterations += 1
            if leave < 0:
                # bound flip; basis and duals unchanged
                self.status[j] = AT_UPPER if direction > 0 else AT_LOWER
                x[j] = hi[j] if direction > 0 else lo[j]
                degenerate = 0
                bland = False
                continue
            out = self.basis[leave]
            to_lower = delta[leave] > 0
            x[out] = lo[out] if to_lower else hi[out]
            if not np.isfinite(x[out]):
                x[out] = 0.0
                self.status[out] = FREE
            else:
                self.status[out] = AT_LOWER if to_lower else AT_UPPER

            # pivot row and dual update
            e = np.zeros(self.m)
            e[leave] = 1.0
            rho = self.factor.btran(e)
            row = self.AT @ rho
            piv = alpha[leave]
            theta = d[j] / piv
            y = y + theta * rho
            d = d - theta * row
            d[out] = -theta
            d[j] = 0.0

            self.status[j] = BASIC
            self.basis[leave] = j
            self.factor.update(leave, alpha)

            # artificials pivoting out are progress, not cycling
            if t <= 1e-12 and out < self.n:
                degenerate += 1
                if degenerate > DEGENERATE_LIMIT:
                    bland = True
            elif t > 1e-12:
                degenerate = 0
                bland = False

    def _log(self, cost, y, d, phase):
        obj = float(cost @ self.x)
        return {"iteration": self.iterations, "phase": phase, "objective": obj,
                "bound": _lagrangian_bound(self.p.b_eq, y, d, self.lo, self.hi)}


def _lagrangian_bound(b, y, d, lo, hi):
    """Lower bound on ``min c'x`` valid for any ``y`` (may be ``-inf``)."""
    with np.errstate(invalid="ignore"):
        pos = np.where(d > 0, d * lo, 0.0)
        neg = np.where(d < 0, d * hi, 0.0)
    total = b @ y + pos.sum() + neg.sum()
    return float(total) if np.isfinite(total) else -np.inf


def solve_lp(p, max_iter=None, trace_every=50):
    """Solve an :class:`LpProblem` by two-phase revised simplex.

    Returns
    -------
    LpSolution
        ``status`` is one of ``optimal``, ``infeasible`` or ``unbounded``.

    Raises
    ------
    SolverError
        If the iteration cap is hit or the final certificates fail.
    """
    m, n = p.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    sign = -1.0 if p.maximize else 1.0
    cost = sign * p.c
    sx = _Simplex(p)
    bnorm = 1.0 + (np.abs(p.b_eq).max() if m else 0.0)

    if m:
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        sx.run(c1, max_iter, 1, trace_every)
        infeas = sx.x[n:].sum()
        if infeas > FEAS_TOL * bnorm:
            x = sx.x[:n].copy()
            return LpSolution("infeasible", x, np.nan, np.zeros(m), np.zeros(n),
                              float(np.abs(p.A_eq @ x - p.b_eq).max()), np.nan, np.nan,
                              sx.iterations, sx.trace)
    # phase 2: artificials can no longer move
    sx.hi[n:] = 0.0
    sx.eligible[n:] = False
    c2 = np.concatenate([cost, np.zeros(m)])
    state = sx.run(c2, max_iter, 2, trace_every)
    x = sx.x[:n].copy()
    if state == "unbounded":
        obj = -sign * np.inf
        return LpSolution("unbounded", x, obj, np.zeros(m), np.zeros(n), np.nan, np.nan, np.nan,
                          sx.iterations, sx.trace)

    # fresh factorization for the certificates
    sx.refactor()
    x = np.clip(sx.x[:n], p.lower, p.upper)
    y, d_ext = sx.duals(c2)
    d = d_ext[:n]
    st = sx.status[:n]
    viol = np.zeros(n)
    viol = np.where((st == AT_LOWER) & (d < 0), -d, viol)
    viol = np.where((st == AT_UPPER) & (d > 0), d, viol)
    viol = np.where(st == FREE, np.abs(d), viol)
    viol = np.where(p.upper - p.lower <= 0, 0.0, viol)
    dual_inf = float(viol.max()) if n else 0.0
    d_clean = np.where(viol > 0, 0.0, d)
    d_clean = np.where(st == BASIC, 0.0, d_clean)
    primal = float(cost @ x)
    bound = _lagrangian_bound(p.b_eq, y, d_clean, p.lower, p.upper)
    gap = abs(primal - bound)
    resid = float(np.abs(p.A_eq @ x - p.b_eq).max()) if m else 0.0
    objective = sign * primal
    sol = LpSolution("optimal", x, objective, sign * y, sign * d, resid, gap, dual_inf,
                     sx.iterations, sx.trace)
    if resid > RESIDUAL_CERT * bnorm or gap > GAP_CERT * (1 + abs(objective)) or dual_inf > 1e-7:
        raise SolverError("LP certificates not met", residual=resid, gap=gap,
                          dual_infeasibility=dual_inf, trace=sx.trace[-5:])
    return sol


def dump_lp(p, fh=None):
    """Write ``p`` in a line-oriented text format; returns the text.

    Format::

        # classim-lp 1
        sense max|min
        size <rows> <cols>
        c <j> <value>                  (nonzero objective entries)
        bound <j> <lower> <upper>      (bounds other than [0, inf])
        row <i> <rhs> <j>:<a> ...      (one line per equality row)

    Indices are 0-based and floats are written with ``repr`` precision.
    """
    out = io.StringIO()
    m, n = p.shape
    out.write("# classim-lp 1\n")
    out.write(f"sense {'max' if p.maximize else 'min'}\n")
    out.write(f"size {m} {n}\n")
    for j in np.flatnonzero(p.c):
        out.write(f"c {j} {float(p.c[j])!r}\n")
    for j in range(n):
        if p.lower[j] != 0.0 or p.upper[j] != np.inf:
            out.write(f"bound {j} {float(p.lower[j])!r} {float(p.upper[j])!r}\n")
    rows = p.A_eq.tocsr()
    for i in range(m):
        s, e = rows.indptr[i], rows.indptr[i + 1]
        terms = " ".join(f"{j}:{float(a)!r}" for j, a in zip(rows.indices[s:e], rows.data[s:e]))
        out.write(f"row {i} {float(p.b_eq[i])!r} {terms}\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def load_lp(text):
    """Parse the output of :func:`dump_lp`."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = {ln[0]: ln[1:] for ln in lines if ln[0] in ("sense", "size")}
    m, n = int(head["size"][0]), int(head["size"][1])
    c = np.zeros(n)
    lo, hi = np.zeros(n), np.full(n, np.inf)
    b = np.zeros(m)
    ri, ci, vals = [], [], []
    for ln in lines:
        if ln[0] == "c":
            c[int(ln[1])] = float(ln[2])
        elif ln[0] == "bound":
            lo[int(ln[1])], hi[int(ln[1])] = float(ln[2]), float(ln[3])
        elif ln[0] == "row":
            i = int(ln[1])
            b[i] = float(ln[2])
            for tok in ln[3:]:
                j, a = tok.split(":")
                ri.append(i)
                ci.append(int(j))
                vals.append(float(a))
    a = sp.csc_matrix((vals, (ri, ci)), shape=(m, n))
    return LpProblem(c, a, b, lo, hi, maximize=head["sense"][0] == "max")
