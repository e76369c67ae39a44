"""Operator-splitting (ADMM) solver for convex quadratic programs.

Solves

    minimize    0.5 x'Px + q'x
    subject to  l <= A x <= u

where variable bounds are carried as identity rows of ``A``. The iteration
follows the well-known OSQP scheme. A quasi-definite KKT system is factored
once per penalty value; each step projects the constraint copy ``z`` onto the
box before the dual ``y`` moves along the consensus residual. Data are Ruiz
equilibrated and the penalty ``rho`` adapts to the residual balance. Once the
iterates settle, the active set they imply is solved exactly ("polishing") so
that returned points satisfy the KKT conditions to near machine precision.

Infeasibility is reported from the standard certificates built from the
differences of successive iterates.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import NonPsdObjective

log = logging.getLogger(__name__)

SOLVED = "solved"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
MAX_ITER = "max_iter"

INF = np.inf
_MIN_SCALING = 1e-4
_MAX_SCALING = 1e4
_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_EQ_FACTOR = 1e3


@dataclass
class QPSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeasible: float = 1e-6
    max_iter: int = 50000
    check_every: int = 5
    scaling_iter: int = 15
    adaptive_rho: bool = True
    adaptive_rho_every: int = 50
    adaptive_rho_tolerance: float = 5.0
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine: int = 4
    polish_passes: int = 12
    time_limit: float | None = None


@dataclass
class QPResult:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    prim_res: float
    dual_res: float
    status: str
    iterations: int = 0
    polished: bool = False
    solve_time: float = 0.0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if len(v) else 0.0


def _col_inf_norms(M: sp.csc_matrix) -> np.ndarray:
    M = sp.csc_matrix(M)
    out = np.zeros(M.shape[1])
    absd = np.abs(M.data)
    nnz_cols = np.diff(M.indptr) > 0
    if absd.size:
        out[nnz_cols] = np.maximum.reduceat(absd, M.indptr[:-1][nnz_cols])
    return out


def _row_inf_norms(M: sp.csr_matrix) -> np.ndarray:
    return _col_inf_norms(sp.csc_matrix(M.T))


def _limit(v: np.ndarray) -> np.ndarray:
    v = np.where(v < _MIN_SCALING, 1.0, v)
    return np.minimum(v, _MAX_SCALING)


def check_psd(P, tol: float = 1e-9) -> None:
    """Raise :class:`NonPsdObjective` if ``P`` is not symmetric PSD."""
    P = sp.csc_matrix(P)
    n = P.shape[0]
    if n == 0:
        return
    scale = max(1.0, float(np.max(np.abs(P.data), initial=0.0)))
    asym = abs(P - P.T)
    if asym.nnz and asym.max() > tol * scale:
        raise NonPsdObjective("quadratic cost matrix is not symmetric")
    if P.nnz == 0:
        return
    D = P.toarray()
    try:
        np.linalg.cholesky(D + (tol * scale * 10) * np.eye(n))
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(D)[0])
        raise NonPsdObjective(f"quadratic cost matrix has negative eigenvalue {lam:.3e}") from None


class QPWorkspace:
    """Scaled problem data plus cached factorizations.

    Only the bounds may change between solves, which is what branch-and-bound
    needs: the matrices (and hence scaling) stay fixed while binaries are
    pinned through their bound rows.
    """

    def __init__(self, P, q, A, l, u, settings: QPSettings | None = None):
        self.settings = settings or QPSettings()
        self.P = sp.csc_matrix(P, dtype=float)
        self.A = sp.csc_matrix(A, dtype=float)
        self.q = np.asarray(q, dtype=float).copy()
        self.n = self.P.shape[0]
        self.m = self.A.shape[0]
        self._scale()
        self._factor_cache: dict = {}
        self.set_bounds(l, u)

    def _scale(self):
        s = self.settings
        n, m = self.n, self.m
        D = np.ones(n)
        E = np.ones(m)
        c = 1.0
        P = self.P.copy()
        A = self.A.copy()
        q = self.q.copy()
        for _ in range(s.scaling_iter):
            d = _limit(np.sqrt(np.maximum(_col_inf_norms(P), _col_inf_norms(A))))
            d = 1.0 / d
            e = 1.0 / _limit(np.sqrt(_row_inf_norms(A))) if m else np.ones(0)
            Dm = sp.diags(d)
            Em = sp.diags(e)
            P = (Dm @ P @ Dm).tocsc()
            A = (Em @ A @ Dm).tocsc()
            q = d * q
            D *= d
            E *= e
            mean_p = float(np.mean(_col_inf_norms(P))) if n else 0.0
            ct = max(mean_p, _inf_norm(q))
            ct = 1.0 / _limit(np.array([ct]))[0]
            P = P * ct
            q = q * ct
            c *= ct
        self.Ps, self.As, self.qs = P.tocsc(), A.tocsc(), q
        self.AsT = self.As.T.tocsc()
        self.D, self.E, self.c = D, E, c
        self.Dinv = 1.0 / D
        self.Einv = 1.0 / E if m else np.ones(0)

    def set_bounds(self, l, u):
        self.l = np.asarray(l, dtype=float).copy()
        self.u = np.asarray(u, dtype=float).copy()
        self.ls = self.E * self.l
        self.us = self.E * self.u
        self.eq = np.abs(self.u - self.l) < 1e-10 * np.maximum(1.0, np.abs(self.l))
        self.free = np.isinf(self.l) & np.isinf(self.u)

    def _rho_vec(self, rho):
        r = np.full(self.m, rho)
        r[self.eq] = min(rho * _RHO_EQ_FACTOR, _RHO_MAX)
        r[self.free] = _RHO_MIN
        return r

    def _factor(self, rho_vec):
        key = (rho_vec.tobytes(),)
        lu = self._factor_cache.get(key)
        if lu is None:
            s = self.settings
            K = sp.bmat(
                [[self.Ps + s.sigma * sp.identity(self.n), self.AsT],
                 [self.As, sp.diags(-1.0 / rho_vec)]],
                format="csc",
            )
            lu = spla.splu(K, permc_spec="COLAMD")
            if len(self._factor_cache) > 8:
                self._factor_cache.clear()
            self._factor_cache[key] = lu
        return lu

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def _residuals(self, xs, zs, ys):
        """Unscaled primal/dual residuals and their normalizers."""
        Ax = self.Einv * (self.As @ xs)
        z = self.Einv * zs
        prim = _inf_norm(Ax - z)
        Px = self.Dinv * (self.Ps @ xs) / self.c
        Aty = self.Dinv * (self.AsT @ ys) / self.c
        q = self.Dinv * self.qs / self.c
        dual = _inf_norm(Px + q + Aty)
        prim_scale = max(_inf_norm(Ax), _inf_norm(z))
        dual_scale = max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(q))
        return prim, dual, prim_scale, dual_scale

    def _converged(self, prim, dual, ps, ds, factor=1.0):
        s = self.settings
        return (prim <= factor * (s.eps_abs + s.eps_rel * ps)
                and dual <= factor * (s.eps_abs + s.eps_rel * ds))

    def _unscale(self, xs, zs, ys):
        return self.D * xs, self.Einv * zs, self.E * ys / self.c

    # -- infeasibility certificates (on unscaled quantities) --------------
    def _primal_infeasible(self, dys) -> bool:
        s = self.settings
        dy = self.E * dys
        dy = np.where(np.isinf(self.u) & (dy > 0), 0.0, dy)
        dy = np.where(np.isinf(self.l) & (dy < 0), 0.0, dy)
        norm = _inf_norm(dy)
        if norm < 1e-12:
            return False
        dys_proj = dy / self.E
        Aty = self.Dinv * (self.AsT @ dys_proj)
        if _inf_norm(Aty) > s.eps_infeasible * norm:
            return False
        uf = np.where(np.isinf(self.u), 0.0, self.u)
        lf = np.where(np.isinf(self.l), 0.0, self.l)
        support = float(uf @ np.maximum(dy, 0.0) + lf @ np.minimum(dy, 0.0))
        return support < -s.eps_infeasible * norm

    def _dual_infeasible(self, dxs) -> bool:
        s = self.settings
        dx = self.D * dxs
        norm = _inf_norm(dx)
        if norm < 1e-12:
            return False
        tol = s.eps_infeasible * norm
        if _inf_norm(self.P @ dx) > tol:
            return False
        if float(self.q @ dx) >= -tol:
            return False
        Adx = self.A @ dx
        lo_ok = np.isinf(self.l) | (Adx >= -tol)
        hi_ok = np.isinf(self.u) | (Adx <= tol)
        return bool(np.all(lo_ok & hi_ok))

    # -- polishing -----------------------------------------------------------
    def _polish(self, xs, zs, ys):
        """Solve the KKT system of the active set implied by the iterates.

        Rows whose multiplier comes out with the wrong sign are released and
        violated inactive rows are added, for a few passes; returns the
        unscaled (x, z, y) on success, else ``None``.
        """
        s = self.settings
        low = (zs - self.ls) < -ys
        upp = (self.us - zs) < ys
        low |= self.eq
        upp &= ~low
        for _ in range(s.polish_passes):
            act = np.flatnonzero(low | upp)
            Ar = self.As[act]
            br = np.where(low[act], self.ls[act], self.us[act])
            k = len(act)
            K0 = sp.bmat([[self.Ps, Ar.T], [Ar, None]], format="csc") if k else self.Ps.tocsc()
            Kreg = K0 + sp.diags(
                np.concatenate([np.full(self.n, s.polish_delta), np.full(k, -s.polish_delta)])
            )
            try:
                lu = spla.splu(sp.csc_matrix(Kreg), permc_spec="COLAMD")
            except RuntimeError:
                return None
            rhs = np.concatenate([-self.qs, br])
            sol = lu.solve(rhs)
            for _ in range(s.polish_refine):
                sol = sol + lu.solve(rhs - K0 @ sol)
            if not np.all(np.isfinite(sol)):
                return None
            xp = sol[: self.n]
            yp = np.zeros(self.m)
            yp[act] = sol[self.n:]
            Axp = self.As @ xp
            zp = np.clip(Axp, self.ls, self.us)
            x, z, y = self._unscale(xp, zp, yp)
            prim, dual, ps, ds = self._residuals(xp, zp, yp)
            sign_tol = s.eps_abs + s.eps_rel * ds
            y_u = y
            wrong = (low & ~self.eq & (y_u > sign_tol)) | (upp & ~self.eq & (y_u < -sign_tol))
            viol_lo = (~low) & (Axp < self.ls - 1e-12 - 1e-9 * np.abs(self.ls))
            viol_hi = (~upp) & (Axp > self.us + 1e-12 + 1e-9 * np.abs(self.us))
            if not wrong.any() and not (viol_lo.any() or viol_hi.any()):
                if self._converged(prim, dual, ps, ds):
                    return x, z, y, prim, dual
                return None
            low = (low & ~wrong) | viol_lo
            upp = (upp & ~wrong) | viol_hi
            upp &= ~low
        return None

    # -- main loop -------------------------------------------------------------
    def solve(self, warm_start=None) -> QPResult:
        s = self.settings
        t0 = time.perf_counter()
        n, m = self.n, self.m
        if warm_start is not None and warm_start[0] is not None:
            x0, y0 = warm_start
            xs = np.asarray(x0, dtype=float) * self.Dinv
            ys = (np.asarray(y0, dtype=float) * self.c * self.Einv
                  if y0 is not None else np.zeros(m))
        else:
            xs = np.zeros(n)
            ys = np.zeros(m)
        zs = np.clip(self.As @ xs, self.ls, self.us)
        rho = s.rho
        rho_vec = self._rho_vec(rho)
        lu = self._factor(rho_vec)
        alpha = s.alpha
        polish_at = 1e-3
        prim = dual = np.inf
        it = 0
        status = MAX_ITER
        polished = None
        xs_prev, ys_prev = xs.copy(), ys.copy()
        while it < s.max_iter:
            it += 1
            rhs = np.concatenate([s.sigma * xs - self.qs, zs - ys / rho_vec])
            sol = lu.solve(rhs)
            xt = sol[:n]
            zt = zs + (sol[n:] - ys) / rho_vec
            x_new = alpha * xt + (1 - alpha) * xs
            zr = alpha * zt + (1 - alpha) * zs
            z_new = np.clip(zr + ys / rho_vec, self.ls, self.us)
            ys = ys + rho_vec * (zr - z_new)
            xs, zs = x_new, z_new

            if it % s.check_every:
                continue
            prim, dual, ps, ds = self._residuals(xs, zs, ys)
            if self._converged(prim, dual, ps, ds):
                status = SOLVED
                break
            if self._primal_infeasible(ys - ys_prev):
                status = PRIMAL_INFEASIBLE
                break
            if self._dual_infeasible(xs - xs_prev):
                status = DUAL_INFEASIBLE
                break
            xs_prev, ys_prev = xs.copy(), ys.copy()
            if s.polish and self._converged(prim, dual, ps, ds, factor=polish_at / s.eps_rel):
                polished = self._polish(xs, zs, ys)
                if polished is not None:
                    break
                polish_at /= 10.0
            if s.time_limit is not None and time.perf_counter() - t0 > s.time_limit:
                break
            if s.adaptive_rho and it % s.adaptive_rho_every == 0:
                Axs = self.As @ xs
                rp = _inf_norm(Axs - zs) / (max(_inf_norm(Axs), _inf_norm(zs)) + 1e-10)
                Pxs = self.Ps @ xs
                Atys = self.AsT @ ys
                rd = _inf_norm(Pxs + self.qs + Atys) / (
                    max(_inf_norm(Pxs), _inf_norm(Atys), _inf_norm(self.qs)) + 1e-10)
                new_rho = float(np.clip(rho * np.sqrt(rp / (rd + 1e-10)), _RHO_MIN, _RHO_MAX))
                if new_rho > rho * s.adaptive_rho_tolerance or new_rho < rho / s.adaptive_rho_tolerance:
                    rho = new_rho
                    rho_vec = self._rho_vec(rho)
                    lu = self._factor(rho_vec)

        if polished is None and status == SOLVED and s.polish:
            polished = self._polish(xs, zs, ys)
        if polished is not None:
            x, z, y, prim, dual = polished
            status = SOLVED
        else:
            x, z, y = self._unscale(xs, zs, ys)
            if status == PRIMAL_INFEASIBLE:
                y = self.E * (ys - ys_prev)
            elif status == DUAL_INFEASIBLE:
                x = self.D * (xs - xs_prev)
        obj = self.objective(x) if status in (SOLVED, MAX_ITER) else (
            np.inf if status == PRIMAL_INFEASIBLE else -np.inf)
        return QPResult(
            x=x, y=y, z=z, objective=obj, prim_res=prim, dual_res=dual, status=status,
            iterations=it, polished=polished is not None,
            solve_time=time.perf_counter() - t0,
        )


def _assemble(n, A, lower, upper, lb, ub):
    blocks = []
    lo, hi = [], []
    if A is not None and sp.csr_matrix(A).shape[0]:
        A = sp.csr_matrix(A, dtype=float)
        blocks.append(A)
        m = A.shape[0]
        lo.append(np.full(m, -INF) if lower is None else np.asarray(lower, dtype=float))
        hi.append(np.full(m, INF) if upper is None else np.asarray(upper, dtype=float))
    lb = np.full(n, -INF) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, INF) if ub is None else np.asarray(ub, dtype=float)
    bounded = np.flatnonzero(np.isfinite(lb) | np.isfinite(ub))
    if len(bounded):
        blocks.append(sp.identity(n, format="csr")[bounded])
        lo.append(lb[bounded])
        hi.append(ub[bounded])
    if blocks:
        Afull = sp.vstack(blocks, format="csc")
        return Afull, np.concatenate(lo), np.concatenate(hi), bounded
    return sp.csc_matrix((0, n)), np.zeros(0), np.zeros(0), bounded


def solve_qp(Q, c, A=None, lower=None, upper=None, lb=None, ub=None, *,
             settings: QPSettings | None = None, warm_start=None,
             check_convexity: bool = True) -> QPResult:
    """Minimize ``0.5 x'Qx + c'x`` subject to ``lower <= A x <= upper`` and ``lb <= x <= ub``.

    The returned ``y`` holds multipliers for the rows of ``A`` followed by
    those of the finite variable bounds (in variable order), with the sign
    convention ``Qx + c + A'y = 0``: negative on active lower bounds,
    positive on active upper bounds.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    Q = sp.csc_matrix(Q, shape=(n, n), dtype=float) if Q is not None else sp.csc_matrix((n, n))
    if check_convexity:
        check_psd(Q)
    Afull, l, u, _ = _assemble(n, A, lower, upper, lb, ub)
    if np.any(l > u + 1e-12 * np.maximum(1, np.abs(l))):
        return QPResult(x=np.zeros(n), y=np.zeros(len(l)), z=np.zeros(len(l)),
                        objective=np.inf, prim_res=np.inf, dual_res=np.inf,
                        status=PRIMAL_INFEASIBLE)
    ws = QPWorkspace(Q, c, Afull, l, u, settings)
    return ws.solve(warm_start=warm_start)


def kkt_residuals(Q, c, A, lower, upper, x, y, lb=None, ub=None) -> dict:
    """Absolute KKT residuals of a candidate primal/dual pair.

    ``y`` follows the layout returned by :func:`solve_qp`. Reports
    stationarity, primal infeasibility, dual sign violation and
    complementarity, each as an infinity norm.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    Q = sp.csc_matrix(Q, shape=(n, n))
    Afull, l, u, _ = _assemble(n, A, lower, upper, lb, ub)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Ax = Afull @ x
    stat = _inf_norm(Q @ x + c + Afull.T @ y)
    prim = _inf_norm(np.maximum(l - Ax, 0) + np.maximum(Ax - u, 0))
    sign = _inf_norm(np.where(np.isinf(u), np.maximum(y, 0), 0.0)
                     + np.where(np.isinf(l), np.minimum(y, 0), 0.0))
    gap_lo = np.where(np.isfinite(l), Ax - l, 0.0)
    gap_hi = np.where(np.isfinite(u), u - Ax, 0.0)
    comp = _inf_norm(np.where(y < 0, -y * gap_lo, 0.0) + np.where(y > 0, y * gap_hi, 0.0))
    return {"stationarity": stat, "primal": prim, "dual_sign": sign, "complementarity": comp}
