"""Primal-dual interior-point solver for small block-diagonal SDPs.

Problems are stated over complex Hermitian (or real symmetric) blocks::

    optimize   sum_k tr(C_k X_k)
    subject to sum_k tr(F_jk X_k) = g_j,   j = 0..m-1
               X_k >= 0

Hermitian blocks are embedded as real symmetric matrices
``[[Re X, -Im X], [Im X, Re X]]`` and the data are halved so that inner
products, objective values and dual multipliers are identical to the
complex problem. The core iterates on the real problem::

    min <C, X>  s.t.  A(X) = b, X >= 0        max b'y  s.t.  A*(y) + Z = C, Z >= 0

using Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Many
problems sharing the constraint operator ``A`` can be solved in one batch,
which the witness engine uses to push thousands of strategy SDPs through
vectorized LAPACK calls.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from classim.errors import SolverError, ValidationError

GAP_TARGET = 1e-9
FEAS_TARGET = 1e-9
ACCEPT_GAP = 1e-6
ACCEPT_RESIDUAL = 1e-7
ACCEPT_MIN_EIG = -1e-8
MAX_ITER = 200
RANK_TOL = 1e-10
FEASIBILITY_TOL = 1e-7

HERMITIAN = "hermitian"
REAL = "real"


@dataclass(frozen=True)
class SdpProblem:
    """Block SDP in the Hermitian form documented at module level.

    Attributes
    ----------
    dims : tuple of int
        Block dimensions.
    costs : tuple of ndarray
        One ``(d_k, d_k)`` cost operator per block.
    constraints : tuple of dict
        ``constraints[j]`` maps block index ``k`` to ``F_jk``; absent blocks
        contribute nothing.
    rhs : ndarray
        The values ``g_j``.
    maximize : bool
    kinds : tuple of str
        ``"hermitian"`` or ``"real"`` per block.
    """

    dims: tuple
    costs: tuple
    constraints: tuple
    rhs: np.ndarray
    maximize: bool = True
    kinds: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        kinds = self.kinds or (HERMITIAN,) * len(dims)
        if len(kinds) != len(dims) or len(self.costs) != len(dims):
            raise ValidationError("costs and kinds must have one entry per block")
        if any(d < 1 for d in dims):
            raise ValidationError("block dimensions must be positive")
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if rhs.size != len(self.constraints):
            raise ValidationError("rhs length must match the number of constraints")
        costs = []
        for k, c in enumerate(self.costs):
            costs.append(_check_block(c, dims[k], kinds[k], "cost"))
        cons = []
        for row in self.constraints:
            new = {}
            for k, f in row.items():
                if not 0 <= k < len(dims):
                    raise ValidationError(f"constraint references unknown block {k}")
                new[int(k)] = _check_block(f, dims[k], kinds[k], "constraint")
            cons.append(new)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "kinds", tuple(kinds))
        object.__setattr__(self, "costs", tuple(costs))
        object.__setattr__(self, "constraints", tuple(cons))
        object.__setattr__(self, "rhs", rhs)

    @property
    def n_constraints(self):
        return len(self.constraints)


@dataclass
class SdpSolution:
    status: str
    blocks: list
    objective: float
    dual_objective: float
    y: np.ndarray
    gap: float
    residual: float
    min_eig: float
    iterations: int


@dataclass
class SdpBatchResult:
    """Arrays over the batch axis returned by :meth:`PreparedSdp.solve`."""

    status: np.ndarray
    objective: np.ndarray
    dual_objective: np.ndarray
    gap: np.ndarray
    residual: np.ndarray
    min_eig: np.ndarray
    y: np.ndarray
    blocks: list
    iterations: np.ndarray
    dual_min_eig: np.ndarray = None

    def solution(self, i):
        return SdpSolution(
            status=str(self.status[i]),
            blocks=[b[i] for b in self.blocks],
            objective=float(self.objective[i]),
            dual_objective=float(self.dual_objective[i]),
            y=self.y[i],
            gap=float(self.gap[i]),
            residual=float(self.residual[i]),
            min_eig=float(self.min_eig[i]),
            iterations=int(self.iterations[i]),
        )


@dataclass
class FeasibilityResult:
    """Outcome of :func:`sdp_feasible`.

    When ``feasible`` the ``blocks`` satisfy the constraints; otherwise ``y``
    is a Farkas ray with ``A*(y) <= 0`` and ``g'y > 0``.
    """

    feasible: bool
    blocks: list = None
    y: np.ndarray = None
    elastic: float = float("nan")
    solution: SdpSolution = field(default=None, repr=False)


def _check_block(a, d, kind, what):
    a = np.asarray(a, dtype=complex)
    if a.shape != (d, d):
        raise ValidationError(f"{what} block has shape {a.shape}, expected {(d, d)}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{what} block has non-finite entries")
    dev = np.abs(a - a.conj().T).max()
    if dev > 1e-9 * max(1.0, np.abs(a).max()):
        raise ValidationError(f"{what} block is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    if kind == REAL:
        if np.abs(a.imag).max() > 1e-12:
            raise ValidationError(f"{what} block of a real block is complex")
        return a.real.copy()
    return a


def embed(a, kind=HERMITIAN):
    """Real symmetric image of (a stack of) Hermitian matrices, halved."""
    a = np.asarray(a)
    if kind == REAL:
        return np.real(a).astype(float)
    re, im = a.real, a.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return 0.5 * np.concatenate([top, bot], axis=-2)


def unembed(y, kind=HERMITIAN):
    """Inverse of the embedding on the Hermitian-structured part of ``y``."""
    if kind == REAL:
        return np.asarray(y, dtype=float)
    d = y.shape[-1] // 2
    y11, y12 = y[..., :d, :d], y[..., :d, d:]
    y21, y22 = y[..., d:, :d], y[..., d:, d:]
    return 0.5 * (y11 + y22) + 0.5j * (y21 - y12)


def _swap(a):
    return np.swapaxes(a, -1, -2)


def _sym(a):
    return 0.5 * (a + _swap(a))


class SdpBuilder:
    """Incremental construction of an :class:`SdpProblem`."""

    def __init__(self):
        self.dims = []
        self.kinds = []
        self.costs = []
        self.constraints = []
        self.rhs = []

    def add_block(self, dim, cost=None, kind=HERMITIAN):
        self.dims.append(int(dim))
        self.kinds.append(kind)
        self.costs.append(np.zeros((dim, dim)) if cost is None else np.asarray(cost))
        return len(self.dims) - 1

    def add_constraint(self, terms, value):
        """Add ``sum_k tr(F_k X_k) = value`` with ``terms = {k: F_k}``."""
        self.constraints.append(dict(terms))
        self.rhs.append(float(value))
        return len(self.rhs) - 1

    def add_matrix_equality(self, terms, rhs):
        """Add ``sum_k coef_k X_k = rhs`` as ``d^2`` real constraints.

        ``terms`` maps block index to a real scalar coefficient; all blocks
        involved must share dimension with ``rhs``. The equality is expanded
        in the orthonormal Hermitian basis.
        """
        from classim.linalg import hermitian_basis

        rhs = np.asarray(rhs, dtype=complex)
        d = rhs.shape[0]
        rows = []
        for h in hermitian_basis(d):
            val = float(np.real(np.trace(h @ rhs)))
            rows.append(self.add_constraint({k: c * h for k, c in terms.items()}, val))
        return rows

    def build(self, maximize=True):
        return SdpProblem(
            dims=tuple(self.dims),
            costs=tuple(self.costs),
            constraints=tuple(self.constraints),
            rhs=np.array(self.rhs, dtype=float),
            maximize=maximize,
            kinds=tuple(self.kinds),
        )


class PreparedSdp:
    """Constraint structure shared by a batch of SDPs.

    Parameters
    ----------
    dims, kinds : sequence
        Block layout.
    constraints : sequence of dict
        As in :class:`SdpProblem`.

    Notes
    -----
    Linearly dependent constraint rows are detected with a column-pivoted QR
    and removed; the right-hand sides of removed rows are checked for
    consistency at solve time.
    """

    def __init__(self, dims, kinds, constraints):
        self.dims = tuple(int(d) for d in dims)
        self.kinds = tuple(kinds)
        self.m_orig = len(constraints)
        self.real_dims = [d if k == REAL else 2 * d for d, k in zip(self.dims, self.kinds)]

        # group blocks of equal real size so they can be stacked
        sizes = sorted(set(self.real_dims))
        self.groups = []
        self.block_loc = [None] * len(self.dims)
        for n in sizes:
            members = [k for k, rn in enumerate(self.real_dims) if rn == n]
            for pos, k in enumerate(members):
                self.block_loc[k] = (len(self.groups), pos)
            self.groups.append((n, members))

        full = [np.zeros((self.m_orig, len(mem), n, n)) for n, mem in self.groups]
        for j, row in enumerate(constraints):
            for k, f in row.items():
                g, pos = self.block_loc[k]
                full[g][j, pos] = embed(f, self.kinds[k])
        self._full = full
        flat = np.concatenate([a.reshape(self.m_orig, -1) for a in full], axis=1) \
            if self.m_orig else np.zeros((0, 1))

        if self.m_orig:
            _, r, piv = scipy.linalg.qr(flat.T, mode="economic", pivoting=True)
            diag = np.abs(np.diag(r))
            rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300))) if diag.size else 0
        else:
            piv, rank = np.arange(0), 0
        self.kept = np.sort(piv[:rank])
        self.dropped = np.setdiff1d(np.arange(self.m_orig), self.kept)
        if self.dropped.size:
            coef, *_ = np.linalg.lstsq(flat[self.kept].T, flat[self.dropped].T, rcond=None)
            self.dropped_coef = coef  # (rank, n_dropped)
        else:
            self.dropped_coef = np.zeros((rank, 0))
        norms = np.linalg.norm(flat[self.kept], axis=1)
        self.row_scale = 1.0 / norms
        self.A = [a[self.kept] * self.row_scale[:, None, None, None] for a in full]
        self.Amat = [a.reshape(rank, -1) for a in self.A]
        self.m = rank
        self.ntot = sum(n * len(mem) for n, mem in self.groups)
        self.trace = None

    @classmethod
    def from_problem(cls, p):
        return cls(p.dims, p.kinds, p.constraints)

    # -- linear maps on lists of stacked group arrays -------------------------
    def _aop(self, xs):
        out = 0.0
        for x, am in zip(xs, self.Amat):
            out = out + x.reshape(x.shape[0], -1) @ am.T
        return out

    def _atop(self, y):
        return [(y @ am).reshape((y.shape[0],) + a.shape[1:]) for a, am in zip(self.A, self.Amat)]

    def _split_costs(self, costs, batch):
        out = []
        for n, mem in self.groups:
            arr = np.zeros((batch, len(mem), n, n))
            for pos, k in enumerate(mem):
                c = np.asarray(costs[k])
                arr[:, pos] = embed(c, self.kinds[k])
            out.append(arr)
        return out

    def _blocks_from_groups(self, xs):
        blocks = []
        for k, kind in enumerate(self.kinds):
            g, pos = self.block_loc[k]
            blocks.append(unembed(xs[g][:, pos], kind))
        return blocks

    # -- public ---------------------------------------------------------------
    def solve(self, costs, rhs, maximize=True, max_iter=MAX_ITER):
        """Solve a batch of problems.

        Parameters
        ----------
        costs : sequence
            One entry per block, each ``(d, d)`` or ``(B, d, d)``.
        rhs : array_like
            ``(m,)`` or ``(B, m)`` right-hand sides in the original
            (unreduced) constraint order.
        maximize : bool

        Returns
        -------
        SdpBatchResult
        """
        rhs = np.asarray(rhs, dtype=float)
        batch = 1
        for c in costs:
            c = np.asarray(c)
            if c.ndim == 3:
                batch = max(batch, c.shape[0])
        if rhs.ndim == 2:
            batch = max(batch, rhs.shape[0])
        rhs = np.broadcast_to(rhs.reshape(-1, self.m_orig) if rhs.ndim == 2 else rhs, (batch, self.m_orig))
        costs = [np.broadcast_to(np.asarray(c), (batch,) + np.asarray(c).shape[-2:]) for c in costs]
        sign = -1.0 if maximize else 1.0
        cg = [sign * c for c in self._split_costs(costs, batch)]

        status = np.array(["optimal"] * batch, dtype=object)
        if self.dropped.size:
            pred = rhs[:, self.kept] @ self.dropped_coef
            bad = np.abs(pred - rhs[:, self.dropped]).max(axis=1) > 1e-9 * (1 + np.abs(rhs).max(axis=1))
            status[bad] = "infeasible"
        b = rhs[:, self.kept] * self.row_scale

        xs, y, zs, iters, _ = self._ipm(cg, b, max_iter, ~(status == "infeasible"))

        blocks = self._blocks_from_groups(xs)
        y_orig = np.zeros((batch, self.m_orig))
        y_orig[:, self.kept] = y * self.row_scale
        pobj = sum(np.real(np.einsum("bij,bji->b", c, x)) for c, x in zip(costs, blocks))
        dual_min = np.full(batch, np.inf)
        for g, c in enumerate(cg):
            full = self._full[g]
            slack = c - (y_orig @ full.reshape(self.m_orig, -1)).reshape(c.shape) if self.m_orig else c
            dual_min = np.minimum(dual_min, np.linalg.eigvalsh(slack)[..., 0].min(axis=1))
        # report multipliers of the problem as posed (maximize flips the sign)
        y_orig = sign * y_orig
        dobj = (rhs * y_orig).sum(axis=1)
        gap = np.abs(pobj - dobj) / (1.0 + np.abs(pobj) + np.abs(dobj))
        resid = np.zeros(batch)
        if self.m_orig:
            ax = np.zeros((batch, self.m_orig))
            for g, x in enumerate(xs):
                ax += x.reshape(batch, -1) @ self._full[g].reshape(self.m_orig, -1).T
            resid = np.abs(ax - rhs).max(axis=1)
        min_eig = np.full(batch, np.inf)
        for blk in blocks:
            min_eig = np.minimum(min_eig, np.linalg.eigvalsh(blk)[:, 0])
        accept = (gap <= ACCEPT_GAP) & (resid <= ACCEPT_RESIDUAL) & (min_eig >= ACCEPT_MIN_EIG)
        accept &= dual_min >= ACCEPT_MIN_EIG * (1.0 + np.abs(dobj))
        status[(status == "optimal") & ~accept] = "failed"
        return SdpBatchResult(status, pobj, dobj, gap, resid, min_eig, y_orig, blocks, iters, dual_min)

    def _start(self, cg, b):
        batch = b.shape[0]
        xs, zs = [], []
        bmax = np.abs(b).max(axis=1) if self.m else np.zeros(batch)
        for (n, mem), c in zip(self.groups, cg):
            cn = np.linalg.norm(c.reshape(batch, -1), axis=1)
            xi = np.maximum.reduce([np.full(batch, 10.0), np.full(batch, np.sqrt(n)), n * (1 + bmax) / 2])
            eta = np.maximum.reduce([np.full(batch, 10.0), np.full(batch, np.sqrt(n)), 1 + cn])
            eye = np.eye(n)
            xs.append(xi[:, None, None, None] * np.broadcast_to(eye, (batch, len(mem), n, n)))
            zs.append(eta[:, None, None, None] * np.broadcast_to(eye, (batch, len(mem), n, n)))
        return xs, np.zeros((batch, self.m)), zs

    def _ipm(self, cg_all, b_all, max_iter, live):
        batch = b_all.shape[0]
        xs_all, y_all, zs_all = self._start(cg_all, b_all)
        iters = np.zeros(batch, dtype=int)
        bnorm = 1.0 + np.linalg.norm(b_all, axis=1)
        cnorm = 1.0 + np.sqrt(sum((c.reshape(batch, -1) ** 2).sum(axis=1) for c in cg_all))
        # best iterate seen so far, by the worst of (gap, primal, dual) error
        best = np.full(batch, np.inf)
        best_x = [x.copy() for x in xs_all]
        best_y = y_all.copy()
        best_z = [z.copy() for z in zs_all]
        since = np.zeros(batch, dtype=int)
        active = np.flatnonzero(live)

        for it in range(max_iter + 1):
            if active.size == 0:
                break
            xs = [x[active] for x in xs_all]
            zs = [z[active] for z in zs_all]
            cg = [c[active] for c in cg_all]
            y = y_all[active]
            b = b_all[active]
            nb = active.size

            rp = b - self._aop(xs) if self.m else np.zeros((nb, 0))
            aty = self._atop(y)
            rd = [c - z - a for c, z, a in zip(cg, zs, aty)]
            xz = sum((x * z).sum(axis=(1, 2, 3)) for x, z in zip(xs, zs))
            mu = xz / self.ntot
            pobj = sum((c * x).sum(axis=(1, 2, 3)) for c, x in zip(cg, xs))
            dobj = (b * y).sum(axis=1)
            scale = 1 + np.abs(pobj) + np.abs(dobj)
            relgap = np.maximum(np.abs(pobj - dobj), np.abs(xz)) / scale
            pinf = np.linalg.norm(rp, axis=1) / bnorm[active]
            dinf = np.sqrt(sum((r.reshape(nb, -1) ** 2).sum(axis=1) for r in rd)) / cnorm[active]
            merit = np.maximum(relgap, np.maximum(pinf, dinf))
            merit[~np.isfinite(merit)] = np.inf
            if self.trace is not None:
                self.trace.append((it, float(relgap.max()), float(pinf.max()), float(dinf.max()), float(mu.max())))

            better = merit < best[active]
            if better.any():
                idx = active[better]
                best[idx] = merit[better]
                for g in range(len(xs)):
                    best_x[g][idx] = xs[g][better]
                    best_z[g][idx] = zs[g][better]
                best_y[idx] = y[better]
            since[active] = np.where(better, 0, since[active] + 1)

            done = (relgap < GAP_TARGET) & (pinf < FEAS_TARGET) & (dinf < FEAS_TARGET)
            done |= ~np.isfinite(merit)
            # stop once the iterates stop improving
            done |= since[active] >= 6
            done |= (since[active] >= 2) & (merit < 1e-8)
            if it == max_iter:
                done[:] = True
            if done.any():
                keep = ~done
                active = active[keep]
                if active.size == 0:
                    break
                xs = [x[keep] for x in xs]
                zs = [z[keep] for z in zs]
                cg = [c[keep] for c in cg]
                y, b, rp, mu = y[keep], b[keep], rp[keep], mu[keep]
                rd = [r[keep] for r in rd]
                nb = active.size
            iters[active] = it + 1

            with np.errstate(all="ignore"):
                ap, ad, dx, dy, dz = self._newton(xs, zs, rp, rd, mu, nb)
            bad = ~(np.isfinite(ap) & np.isfinite(ad))
            for arr in dx + dz + [dy]:
                bad |= ~np.isfinite(arr.reshape(nb, -1)).all(axis=1)
            ap[bad] = 0.0
            ad[bad] = 0.0
            since[active[bad]] = 10**6
            for g in range(len(xs)):
                dxg = np.where(bad[:, None, None, None], 0.0, dx[g])
                dzg = np.where(bad[:, None, None, None], 0.0, dz[g])
                xs_all[g][active] = _sym(xs[g] + ap[:, None, None, None] * dxg)
                zs_all[g][active] = _sym(zs[g] + ad[:, None, None, None] * dzg)
            y_all[active] = y + ad[:, None] * np.where(bad[:, None], 0.0, dy)

        return best_x, best_y, best_z, iters, best

    def _newton(self, xs, zs, rp, rd, mu, nb):
        """Mehrotra predictor-corrector direction with NT scaling."""
        gs, ginvs, ws, lams = [], [], [], []
        for x, z in zip(xs, zs):
            wx, ux = np.linalg.eigh(_sym(x))
            sx = np.sqrt(np.clip(wx, 1e-300, None))
            lx = ux * sx[..., None, :]
            lxinv = _swap(ux / sx[..., None, :])
            lam2, q = np.linalg.eigh(_sym(_swap(lx) @ z @ lx))
            lam = np.sqrt(np.clip(lam2, 1e-300, None))
            g = (lx @ q) / np.sqrt(lam)[..., None, :]
            gs.append(g)
            ginvs.append(np.sqrt(lam)[..., :, None] * (_swap(q) @ lxinv))
            ws.append(g @ _swap(g))
            lams.append(lam)

        if self.m:
            schur = np.zeros((nb, self.m, self.m))
            for w, a, am in zip(ws, self.A, self.Amat):
                waw = w[:, None] @ a[None] @ w[:, None]
                schur += waw.reshape(nb, self.m, -1) @ am.T
            schur = _sym(schur)
            finite = np.isfinite(schur).all(axis=(1, 2))
            schur[~finite] = np.eye(self.m)
            # equilibrate before factoring; M is SPD but badly scaled near the end
            dg = np.sqrt(np.clip(np.diagonal(schur, axis1=1, axis2=2), 1e-300, None))
            schur_s = schur / dg[:, :, None] / dg[:, None, :]
            finite = np.isfinite(schur_s).all(axis=(1, 2)) & np.isfinite(dg).all(axis=1)
            schur_s[~finite] = np.eye(self.m)
            dg[~finite] = 1.0
            solve_m = _spd_solver(schur_s, dg)
            base = rp + self._aop([w @ r @ w for w, r in zip(ws, rd)])
        else:
            solve_m = None
            base = None

        def direction(hs):
            if self.m:
                dy = solve_m(base - self._aop(hs))
            else:
                dy = np.zeros((nb, 0))
            dz = [r - a for r, a in zip(rd, self._atop(dy))]
            dx = [h - w @ d @ w for h, w, d in zip(hs, ws, dz)]
            dxh = [gi @ d @ _swap(gi) for gi, d in zip(ginvs, dx)]
            dzh = [_swap(g) @ d @ g for g, d in zip(gs, dz)]
            return dx, dy, dz, dxh, dzh

        def max_step(dhats):
            smin = np.full(nb, np.inf)
            for dh, lam in zip(dhats, lams):
                s = 1.0 / np.sqrt(lam)
                m = _sym(dh * s[..., :, None] * s[..., None, :])
                m = np.nan_to_num(m, nan=0.0, posinf=1e300, neginf=-1e300)
                smin = np.minimum(smin, np.linalg.eigvalsh(m)[..., 0].min(axis=1))
            return np.where(smin < 0, 1.0 / np.maximum(-smin, 1e-300), np.inf)

        # predictor
        dx, dy, dz, dxh, dzh = direction([-x for x in xs])
        ap = np.minimum(1.0, max_step(dxh))
        ad = np.minimum(1.0, max_step(dzh))
        xz_aff = sum(((x + ap[:, None, None, None] * a) * (z + ad[:, None, None, None] * c)).sum(axis=(1, 2, 3))
                     for x, a, z, c in zip(xs, dx, zs, dz))
        sigma = np.clip(xz_aff / self.ntot / np.maximum(mu, 1e-300), 0.0, 1.0) ** 3

        # corrector
        hs = []
        for g, lam, a, c in zip(gs, lams, dxh, dzh):
            n = lam.shape[-1]
            rhat = -_sym(a @ c)
            idx = np.arange(n)
            rhat[..., idx, idx] += (sigma * mu)[:, None, None] - lam ** 2
            hhat = 2.0 * rhat / (lam[..., :, None] + lam[..., None, :])
            hs.append(g @ hhat @ _swap(g))
        gamma = 0.9 + 0.09 * np.minimum(ap, ad)
        dx, dy, dz, dxh, dzh = direction(hs)
        ap = np.minimum(1.0, gamma * max_step(dxh))
        ad = np.minimum(1.0, gamma * max_step(dzh))
        return ap, ad, dx, dy, dz


def _spd_solver(mat, dg):
    """Batched solver for the equilibrated Schur systems ``D M D``.

    Cholesky is used where it succeeds; members that are numerically
    singular fall back to a truncated eigendecomposition individually.
    """
    try:
        cho = np.linalg.cholesky(mat)
        return lambda r: _cho_solve(cho, r / dg) / dg
    except np.linalg.LinAlgError:
        pass
    cho = np.broadcast_to(np.eye(mat.shape[-1]), mat.shape).copy()
    failed = {}
    for i in range(mat.shape[0]):
        try:
            cho[i] = np.linalg.cholesky(mat[i])
        except np.linalg.LinAlgError:
            ev, vec = np.linalg.eigh(mat[i])
            keep = ev > 1e-14 * max(ev[-1], 1e-300)
            failed[i] = (vec[:, keep] / ev[keep]) @ vec[:, keep].T

    def solve(r):
        r = r / dg
        out = _cho_solve(cho, r)
        for i, pinv in failed.items():
            out[i] = pinv @ r[i]
        return out / dg

    return solve


def _cho_solve(cho, r):
    z = np.linalg.solve(cho, r[..., None])
    return np.linalg.solve(_swap(cho), z)[..., 0]


def solve_sdp(p, max_iter=MAX_ITER):
    """Solve an :class:`SdpProblem`.

    Returns
    -------
    SdpSolution
        ``status`` is ``"optimal"`` or ``"infeasible"``.

    Raises
    ------
    SolverError
        If the certificates cannot be met and the problem is not provably
        infeasible.
    """
    prep = PreparedSdp.from_problem(p)
    res = prep.solve(p.costs, p.rhs, p.maximize, max_iter=max_iter)
    sol = res.solution(0)
    if sol.status == "optimal":
        return sol
    if sol.status == "infeasible" or not sdp_feasible(p).feasible:
        sol.status = "infeasible"
        return sol
    raise SolverError(
        "SDP did not reach the required accuracy",
        gap=sol.gap, residual=sol.residual, min_eig=sol.min_eig, iterations=sol.iterations,
    )


def sdp_feasible(p, tol=FEASIBILITY_TOL, max_iter=MAX_ITER):
    """Decide whether the constraint set of ``p`` has a PSD point.

    Solves the elastic problem ``min s`` over ``P >= 0, s >= 0`` with
    ``A(P) - s A(I) = g - A(I)``; the original problem is feasible iff the
    optimum satisfies ``s <= 1`` (take ``X = P + (1 - s) I``).

    Returns
    -------
    FeasibilityResult
    """
    b = SdpBuilder()
    for d, kind in zip(p.dims, p.kinds):
        b.add_block(d, kind=kind)
    s_blk = b.add_block(1, cost=np.ones((1, 1)), kind=REAL)
    shift = np.zeros(p.n_constraints)
    for j, row in enumerate(p.constraints):
        shift[j] = sum(np.real(np.trace(f)) for f in row.values())
        terms = dict(row)
        terms[s_blk] = np.array([[-shift[j]]])
        b.add_constraint(terms, p.rhs[j] - shift[j])
    ep = b.build(maximize=False)
    prep = PreparedSdp.from_problem(ep)
    res = prep.solve(ep.costs, ep.rhs, maximize=False, max_iter=max_iter)
    sol = res.solution(0)
    if sol.status == "infeasible":
        # inconsistent linear system: a combination with zero operator and nonzero rhs
        y = _linear_ray(prep, ep.rhs)
        return FeasibilityResult(False, y=y[: p.n_constraints] if y is not None else None, solution=sol)
    if sol.status != "optimal":
        raise SolverError("elastic feasibility SDP failed", gap=sol.gap, residual=sol.residual)
    s = float(np.real(sol.blocks[s_blk][0, 0]))
    if s <= 1.0 + tol:
        blocks = [blk + (1.0 - s) * np.eye(blk.shape[0]) for blk in sol.blocks[:-1]]
        return FeasibilityResult(True, blocks=blocks, elastic=s, solution=sol)
    return FeasibilityResult(False, y=sol.y, elastic=s, solution=sol)


def _linear_ray(prep, rhs):
    flat = np.concatenate([a.reshape(prep.m_orig, -1) for a in prep._full], axis=1)
    # least-squares residual of rhs against the row space gives y with A*y = 0
    u, s, vt = np.linalg.svd(flat, full_matrices=True)
    null = u[:, s.size:] if s.size < u.shape[1] else np.zeros((u.shape[0], 0))
    small = u[:, : s.size][:, s < RANK_TOL * max(s.max(), 1e-300)] if s.size else np.zeros((u.shape[0], 0))
    basis = np.concatenate([null, small], axis=1)
    if basis.shape[1] == 0:
        return None
    y = basis @ (basis.T @ rhs)
    return y if rhs @ y > 0 else -y


def adjoint(p, y):
    """``sum_j y_j F_jk`` for every block ``k`` of ``p``."""
    out = [np.zeros((d, d), dtype=complex) for d in p.dims]
    for yj, row in zip(y, p.constraints):
        for k, f in row.items():
            out[k] = out[k] + yj * f
    return out
