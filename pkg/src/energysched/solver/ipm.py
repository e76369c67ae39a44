"""Primal-dual interior-point method for convex QPs.

Same problem form as :mod:`.qp`::

    minimize    0.5 x'Px + q'x
    subject to  l <= A x <= u

Rows with ``l == u`` are kept as equalities; every finite one-sided bound
becomes an inequality with its own slack. Each iteration solves one
quasi-definite system with the Mehrotra predictor-corrector step. The method
has no warm start, but its iteration count barely depends on conditioning,
which makes it the engine of choice for the many node relaxations of a
branch-and-bound search on degenerate scheduling problems.

Returned multipliers follow the convention of :mod:`.qp`: ``Px + q + A'y = 0``
with ``y > 0`` on rows held at their upper bound and ``y < 0`` at the lower.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .qp import MAX_ITER, PRIMAL_INFEASIBLE, SOLVED, QPResult


@dataclass
class IPMSettings:
    eps: float = 1e-9
    max_iter: int = 80
    step_fraction: float = 0.995
    reg: float = 1e-10
    refine: int = 3
    eps_acceptable: float = 1e-7
    stall_iter: int = 5
    infeasible_dual: float = 1e10
    time_limit_at: float | None = None


class IPMWorkspace:
    """Convex QP data; bounds may be swapped between solves with :meth:`set_bounds`.

    Every solve first presolves the current bounds: single-variable rows become
    variable bounds, rows whose activity range touches a side force their
    variables to the matching bounds, and fixed variables are substituted out.
    Branching on on/off binaries produces exactly these implied equalities;
    left in place they leave the feasible set without an interior and make
    the multipliers diverge.
    """

    def __init__(self, P, q, A, l, u, settings: IPMSettings | None = None):
        self.settings = settings or IPMSettings()
        self.P = sp.csc_matrix(P)
        self.q = np.asarray(q, dtype=float)
        self.A = sp.csr_matrix(A)
        self.A.eliminate_zeros()
        self.n = self.P.shape[0]
        self.m = self.A.shape[0]
        nnz = np.diff(self.A.indptr)
        self._single = np.flatnonzero(nnz == 1)
        self._multi = np.flatnonzero(nnz > 1)
        self._single_col = self.A.indices[self.A.indptr[self._single]]
        self._single_coef = self.A.data[self.A.indptr[self._single]]
        Am = self.A[self._multi]
        self._Am = Am
        self._Apos = Am.maximum(0).tocsr().copy()
        self._Aneg = Am.minimum(0).tocsr().copy()
        self._Ppos = (self._Apos != 0).astype(float)
        self._Pneg = (self._Aneg != 0).astype(float)
        self._Pabs = (Am != 0).astype(float).tocsr()
        self.set_bounds(l, u)

    def set_bounds(self, l, u):
        self.l = np.asarray(l, dtype=float)
        self.u = np.asarray(u, dtype=float)

    def presolve(self):
        """Return ``(lb, ub, free, rows)`` for the reduced problem, or ``None`` if infeasible.

        ``rows`` indexes the rows of ``A`` kept as constraints; all other rows
        are implied by the returned variable bounds.
        """
        n = self.n
        lb = np.full(n, -np.inf)
        ub = np.full(n, np.inf)
        a = self._single_coef
        lo_s = self.l[self._single] / a
        hi_s = self.u[self._single] / a
        lo_s, hi_s = np.where(a > 0, lo_s, hi_s), np.where(a > 0, hi_s, lo_s)
        np.maximum.at(lb, self._single_col, lo_s)
        np.minimum.at(ub, self._single_col, hi_s)
        lm, um = self.l[self._multi], self.u[self._multi]
        absorbed = np.zeros(len(self._multi), dtype=bool)
        tol = 1e-9
        for _ in range(20):
            if _crossed(lb, ub, tol) or np.any(lb == np.inf) or np.any(ub == -np.inf):
                return None
            fixed = _fixed(lb, ub, tol)
            ub[fixed] = lb[fixed]
            lbf = np.where(np.isfinite(lb), lb, 0.0)
            ubf = np.where(np.isfinite(ub), ub, 0.0)
            lb_inf = np.isinf(lb).astype(float)
            ub_inf = np.isinf(ub).astype(float)
            minact = self._Apos @ lbf + self._Aneg @ ubf
            maxact = self._Apos @ ubf + self._Aneg @ lbf
            min_open = (self._Ppos @ lb_inf + self._Pneg @ ub_inf) > 0
            max_open = (self._Ppos @ ub_inf + self._Pneg @ lb_inf) > 0
            rtol_l = tol * (1.0 + np.abs(np.where(np.isfinite(lm), lm, 0.0)))
            rtol_u = tol * (1.0 + np.abs(np.where(np.isfinite(um), um, 0.0)))
            live = ~absorbed
            if np.any(live & ~max_open & (maxact < lm - rtol_l)) or \
                    np.any(live & ~min_open & (minact > um + rtol_u)):
                return None
            force_hi = live & ~max_open & np.isfinite(lm) & (maxact <= lm + rtol_l)
            force_lo = live & ~min_open & np.isfinite(um) & (minact >= um - rtol_u)
            changed = False
            for rows, to_upper in ((force_hi, True), (force_lo, False)):
                if not np.any(rows):
                    continue
                sub = self._Am[np.flatnonzero(rows)].tocoo()
                up = (sub.data > 0) == to_upper
                cols = sub.col
                val = np.where(up, ub[cols], lb[cols])
                if np.any(~np.isfinite(val)):
                    continue
                lb[cols] = val
                ub[cols] = val
                absorbed |= rows
                changed = True
            # rows with a single variable left become bounds on it
            fixed = _fixed(lb, ub, tol)
            nfree = self._Pabs @ (~fixed).astype(float)
            single = np.flatnonzero(~absorbed & (nfree == 1))
            if len(single):
                fixed_part = self._Am @ np.where(fixed, lb, 0.0)
                for r in single:
                    i0, i1 = self._Am.indptr[r], self._Am.indptr[r + 1]
                    cols = self._Am.indices[i0:i1]
                    k = int(np.flatnonzero(~fixed[cols])[0])
                    j, coef = cols[k], self._Am.data[i0 + k]
                    lo = (lm[r] - fixed_part[r]) / coef
                    hi = (um[r] - fixed_part[r]) / coef
                    if coef < 0:
                        lo, hi = hi, lo
                    lb[j] = max(lb[j], lo)
                    ub[j] = min(ub[j], hi)
                    absorbed[r] = True
                changed = True
            if not changed:
                break
        if _crossed(lb, ub, tol) or np.any(lb == np.inf) or np.any(ub == -np.inf):
            return None
        fixed = _fixed(lb, ub, tol)
        ub[fixed] = lb[fixed]
        free = ~fixed
        nfree = self._Pabs @ free.astype(float)
        act = self._Am @ np.where(fixed, lb, 0.0)
        empty = (nfree == 0)
        if np.any(empty & ((act < lm - 1e-7 * (1 + np.abs(act))) |
                           (act > um + 1e-7 * (1 + np.abs(act))))):
            return None
        keep = self._multi[~absorbed & ~empty]
        return lb, ub, free, keep

    def solve(self, warm_start=None) -> QPResult:
        """``warm_start`` is accepted for interface parity and ignored."""
        t0 = time.perf_counter()
        pre = self.presolve()
        if pre is None:
            return QPResult(x=np.zeros(self.n), y=np.zeros(self.m), z=np.zeros(self.m),
                            objective=np.inf, prim_res=np.inf, dual_res=np.inf,
                            status=PRIMAL_INFEASIBLE, iterations=0, polished=False,
                            solve_time=time.perf_counter() - t0)
        lb, ub, free, keep = pre
        fcols = np.flatnonzero(free)
        xfix = np.where(free, 0.0, lb)
        nf = len(fcols)
        x = xfix.copy()
        y_rows = np.zeros(len(keep))
        status, it, res_p, res_d = SOLVED, 0, 0.0, 0.0
        if nf:
            Pf = self.P[fcols][:, fcols]
            qf = self.q[fcols] + self.P[fcols] @ xfix
            Ak = self.A[keep]
            shift = Ak @ xfix
            bounded = np.flatnonzero(np.isfinite(lb[fcols]) | np.isfinite(ub[fcols]))
            Ar = sp.vstack([Ak[:, fcols], sp.identity(nf, format="csr")[bounded]], format="csr")
            lr = np.concatenate([self.l[keep] - shift, lb[fcols][bounded]])
            ur = np.concatenate([self.u[keep] - shift, ub[fcols][bounded]])
            xf, yr, status, it, res_p, res_d = _interior_point(Pf, qf, Ar, lr, ur, self.settings)
            x[fcols] = xf
            y_rows = yr[:len(keep)]
        yA = np.zeros(self.m)
        yA[keep] = y_rows
        obj = np.inf if status == PRIMAL_INFEASIBLE else float(0.5 * x @ (self.P @ x) + self.q @ x)
        return QPResult(x=x, y=yA, z=self.A @ x, objective=obj, prim_res=res_p, dual_res=res_d,
                        status=status, iterations=it, polished=False,
                        solve_time=time.perf_counter() - t0)


def _fixed(lb, ub, tol):
    both = np.isfinite(lb) & np.isfinite(ub)
    gap = np.where(both, ub - lb, np.inf)
    return gap <= tol * np.maximum(1.0, np.abs(np.where(both, lb, 0.0)))


def _crossed(lb, ub, tol):
    both = np.isfinite(lb) & np.isfinite(ub)
    return bool(np.any(both & (lb > ub + tol * np.maximum(1.0, np.abs(np.where(both, lb, 0.0))))))


def _split_rows(A, l, u):
    eq = np.isfinite(l) & np.isfinite(u) & (np.abs(u - l) <= 1e-12 * np.maximum(1, np.abs(l)))
    lo = np.flatnonzero(np.isfinite(l) & ~eq)
    hi = np.flatnonzero(np.isfinite(u) & ~eq)
    return np.flatnonzero(eq), lo, hi


def _kkt_solver(H, Aeq, settings):
    n, p = H.shape[0], Aeq.shape[0]
    reg = settings.reg
    if p:
        K = sp.bmat([[H + reg * sp.identity(n), Aeq.T], [Aeq, -reg * sp.identity(p)]], format="csc")
        K0 = sp.bmat([[H, Aeq.T], [Aeq, None]], format="csc")
    else:
        K = (H + reg * sp.identity(n)).tocsc()
        K0 = H.tocsc()
    lu = spla.splu(K, permc_spec="COLAMD")

    def solve(rx, re):
        rhs = np.concatenate([rx, re])
        sol = lu.solve(rhs)
        for _ in range(settings.refine):
            sol = sol + lu.solve(rhs - K0 @ sol)
        return sol[:n], sol[n:]
    return solve


def _interior_point(P, q, A, l, u, s: IPMSettings):
    """Mehrotra predictor-corrector on ``min 0.5 x'Px + q'x`` s.t. ``l <= A x <= u``.

    Returns ``(x, y, status, iterations, primal residual, dual residual)``
    with ``y`` in the sign convention of :mod:`.qp`.
    """
    n, m = P.shape[0], A.shape[0]
    eq_rows, lo_rows, hi_rows = _split_rows(A, l, u)
    Aeq, beq = A[eq_rows], l[eq_rows]
    # G x >= h
    G = sp.vstack([A[lo_rows], -A[hi_rows]], format="csr")
    h = np.concatenate([l[lo_rows], -u[hi_rows]])
    GT = G.T.tocsr()
    mi = G.shape[0]
    # start from the regularised equality-constrained point, then push slacks inside
    solve = _kkt_solver((P + GT @ G).tocsc(), Aeq, s)
    x, w = solve(-q + GT @ h, beq)
    y = -w
    r = G @ x - h
    sl, z = r.copy(), -r
    for v in (sl, z):
        shift = -v.min(initial=0.0)
        if shift >= 0:
            v += 1.0 + shift
    p_scale = 1.0 + max(np.abs(h).max(initial=0), np.abs(beq).max(initial=0))
    d_scale = 1.0 + np.abs(q).max(initial=0)
    status = MAX_ITER
    it = 0
    res_p = res_d = np.inf
    best = (np.inf, None)
    stall = 0
    for it in range(1, s.max_iter + 1):
        rd = P @ x + q - Aeq.T @ y - GT @ z
        re = Aeq @ x - beq
        rp = G @ x - sl - h
        mu = float(sl @ z) / mi if mi else 0.0
        res_p = max(np.abs(re).max(initial=0), np.abs(rp).max(initial=0))
        res_d = np.abs(rd).max(initial=0)
        obj = float(0.5 * x @ (P @ x) + q @ x)
        gap = float(sl @ z)
        merit = float(np.max([res_p / p_scale, res_d / d_scale, gap / (1.0 + abs(obj))]))
        if not np.isfinite(merit):
            break
        if merit <= s.eps:
            status = SOLVED
            break
        if merit < 0.5 * best[0]:
            best = (merit, (x.copy(), y.copy(), z.copy(), res_p, res_d))
            stall = 0
        else:
            stall += 1
            if stall >= s.stall_iter and best[0] <= s.eps_acceptable:
                break
        if np.abs(z).max(initial=0) > s.infeasible_dual * d_scale and res_p > 1e-6 * p_scale:
            status = PRIMAL_INFEASIBLE
            break
        if _farkas(G, GT, h, Aeq, beq, z, y, x):
            status = PRIMAL_INFEASIBLE
            break
        W = z / sl
        H = (P + GT @ sp.diags(W) @ G).tocsc()
        try:
            kkt = _kkt_solver(H, Aeq, s)
        except RuntimeError:
            break

        def direction(rc):
            # rc: complementarity residual s*z - target
            rx = -rd - GT @ ((rc + z * rp) / sl)
            dx, w = kkt(rx, -re)
            dy = -w
            ds = G @ dx + rp
            dz = -(rc + z * ds) / sl
            return dx, dy, ds, dz

        dx, dy, ds, dz = direction(sl * z)
        a_p = min(1.0, _max_step(sl, ds))
        a_d = min(1.0, _max_step(z, dz))
        mu_aff = float((sl + a_p * ds) @ (z + a_d * dz)) / mi if mi else 0.0
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dx, dy, ds, dz = direction(sl * z + ds * dz - sigma * mu)
        a_p = min(1.0, s.step_fraction * _max_step(sl, ds))
        a_d = min(1.0, s.step_fraction * _max_step(z, dz))
        a = min(a_p, a_d)
        x += a * dx
        sl += a * ds
        y += a * dy
        z += a * dz
        sl = np.maximum(sl, 1e-300)
        z = np.maximum(z, 1e-300)
        if s.time_limit_at is not None and time.perf_counter() > s.time_limit_at:
            break

    if status == MAX_ITER and best[1] is not None and best[0] <= s.eps_acceptable:
        x, y, z, res_p, res_d = best[1]
        status = SOLVED
    # map multipliers back onto the rows of A
    yA = np.zeros(m)
    yA[eq_rows] = -y
    nlo = len(lo_rows)
    np.add.at(yA, lo_rows, -z[:nlo])
    np.add.at(yA, hi_rows, z[nlo:])
    return x, yA, status, it, res_p, res_d


def _farkas(G, GT, h, Aeq, beq, z, y, x) -> bool:
    """Do the growing multipliers certify that no point satisfies the constraints?

    Normalised ``(z, y)`` with ``G'z + Aeq'y`` near zero and ``h'z + beq'y``
    positive separate the constraint set from every ``x`` of moderate size.
    """
    nz = max(np.abs(z).max(initial=0), np.abs(y).max(initial=0))
    if nz < 1e6:
        return False
    cz, cy = z / nz, y / nz
    r = np.abs(GT @ cz + Aeq.T @ cy).max(initial=0)
    val = float(h @ cz + beq @ cy)
    return val > 1e-9 and r * (1.0 + np.abs(x).sum()) < 0.1 * val


def _max_step(v, dv) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))
