"""Branch-and-bound for convex QPs with binary variables.

Node relaxations are solved by the ADMM engine in :mod:`.qp`, sharing one
scaled workspace for the whole tree (only bounds change between nodes) and
warm-starting each child from its parent's primal/dual iterate.

Search: best-bound node selection with depth-first plunging, branching on the
most fractional binary (lowest index on ties), FIFO among equal-bound nodes.
A 0.5-threshold rounding of the root relaxation seeds the incumbent, and a
ceiling rounding (every binary with a positive relaxed value switched on) is
tried next to it.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ..problem import MIQPProblem
from .ipm import IPMSettings, IPMWorkspace
from .qp import (
    DUAL_INFEASIBLE,
    MAX_ITER,
    PRIMAL_INFEASIBLE,
    SOLVED,
    QPSettings,
    QPWorkspace,
    check_psd,
)

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
GAP_REACHED = "gap_reached"
TIME_LIMIT = "time_limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

INT_TOL = 1e-6

ADMM = "admm"
IPM = "ipm"


@dataclass
class NodeRecord:
    node: int
    parent: int | None
    depth: int
    relaxation: float
    parent_relaxation: float | None
    best_bound: float
    incumbent: float
    gap: float


@dataclass
class MIQPSolution:
    values: np.ndarray | None
    objective: float
    status: str
    rel_gap: float
    nodes: int
    solve_time: float
    best_bound: float = -np.inf
    node_log: list = field(default_factory=list)
    qp_iterations: int = 0

    @property
    def has_solution(self) -> bool:
        return self.values is not None


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    if not np.isfinite(bound):
        return np.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1.0)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lower: dict = field(compare=False)
    warm: tuple = field(compare=False, default=(None, None))
    parent: int | None = field(compare=False, default=None)


class _Reduced:
    """Problem with bound-fixed variables substituted out."""

    def __init__(self, problem: MIQPProblem):
        p = problem
        n = p.n_vars
        lb = p.var_lower.copy()
        ub = p.var_upper.copy()
        is_bin = np.zeros(n, dtype=bool)
        is_bin[p.binary] = True
        lb[is_bin] = np.ceil(np.maximum(lb[is_bin], 0.0) - INT_TOL)
        ub[is_bin] = np.floor(np.minimum(ub[is_bin], 1.0) + INT_TOL)
        self.trivially_infeasible = bool(np.any(lb > ub + 1e-12))
        fixed = np.abs(ub - lb) <= 1e-12
        free = np.flatnonzero(~fixed)
        fix = np.flatnonzero(fixed)
        xf = lb[fix]
        Q = sp.csc_matrix(p.Q)
        self.n_full = n
        self.free, self.fix, self.xf = free, fix, xf
        self.P = Q[free][:, free]
        self.q = p.c[free] + (Q[free][:, fix] @ xf if len(fix) else 0.0)
        self.offset = p.offset + (0.5 * xf @ (Q[fix][:, fix] @ xf) + p.c[fix] @ xf if len(fix) else 0.0)
        A = sp.csr_matrix(p.A)
        Af = A[:, free]
        shift = A[:, fix] @ xf if len(fix) else np.zeros(A.shape[0])
        rl = p.row_lower - shift
        ru = p.row_upper - shift
        # rows left without free variables only need a feasibility check
        nnz_rows = np.diff(Af.tocsr().indptr) > 0
        tol = 1e-9 * np.maximum(1.0, np.abs(shift))
        empty = ~nnz_rows
        if np.any(rl[empty] > tol[empty]) or np.any(ru[empty] < -tol[empty]):
            self.trivially_infeasible = True
        keep = np.flatnonzero(nnz_rows)
        self.A = sp.vstack([Af[keep], sp.identity(len(free), format="csr")], format="csc")
        self.l = np.concatenate([rl[keep], lb[free]])
        self.u = np.concatenate([ru[keep], ub[free]])
        self.m_rows = len(keep)
        pos = -np.ones(n, dtype=int)
        pos[free] = np.arange(len(free))
        self.bin = np.array([pos[i] for i in p.binary if pos[i] >= 0], dtype=int)
        self.bin_full = np.array([i for i in p.binary if pos[i] >= 0], dtype=int)

    def expand(self, xr: np.ndarray) -> np.ndarray:
        x = np.empty(self.n_full)
        x[self.free] = xr
        x[self.fix] = self.xf
        return x

    def bounds_with(self, fixings: dict):
        l = self.l.copy()
        u = self.u.copy()
        base = self.m_rows
        for j, v in fixings.items():
            l[base + j] = v
            u[base + j] = v
        return l, u


def solve_miqp(problem: MIQPProblem, mip_gap: float = 1e-3, time_limit: float = 60.0, *,
               settings: QPSettings | None = None, node_limit: int | None = None,
               verbose: bool = False, check_convexity: bool = True,
               node_solver: str = IPM) -> MIQPSolution:
    """Minimize a convex MIQP to within relative gap ``mip_gap``.

    ``rel_gap`` is ``(incumbent - best_bound) / max(|incumbent|, 1)``.

    ``node_solver`` picks the relaxation engine: ``"admm"`` (warm-started
    operator splitting with polishing) or ``"ipm"`` (interior point, which
    copes better with the degenerate active sets of on/off scheduling
    models). Either way, a relaxation the chosen engine cannot settle is
    handed to the other one before the node is given up.
    """
    if mip_gap <= 0:
        raise ValueError("mip_gap must be positive")
    if node_solver not in (ADMM, IPM):
        raise ValueError(f"node_solver must be {ADMM!r} or {IPM!r}")
    t0 = time.perf_counter()
    red = _Reduced(problem)
    if check_convexity:
        check_psd(red.P)
    node_log: list[NodeRecord] = []

    def finish(values, obj, status, bound, nodes, iters):
        gap = relative_gap(obj, bound) if values is not None else np.inf
        if status in (OPTIMAL, GAP_REACHED) and values is not None:
            gap = min(gap, relative_gap(obj, bound))
        return MIQPSolution(values=values, objective=obj, status=status, rel_gap=gap, nodes=nodes,
                            solve_time=time.perf_counter() - t0, best_bound=bound,
                            node_log=node_log, qp_iterations=iters)

    if red.trivially_infeasible:
        return finish(None, np.inf, INFEASIBLE, np.inf, 0, 0)
    if len(red.free) == 0:
        x = red.expand(np.zeros(0))
        return finish(x, problem.objective(x), OPTIMAL, problem.objective(x), 1, 0)

    qs = replace(settings) if settings is not None else QPSettings()
    engines = {}

    def engine(kind):
        if kind not in engines:
            if kind == ADMM:
                engines[kind] = QPWorkspace(red.P, red.q, red.A, red.l, red.u, qs)
            else:
                engines[kind] = IPMWorkspace(red.P, red.q, red.A, red.l, red.u, IPMSettings())
        return engines[kind]

    bins = red.bin
    iters = 0
    other = IPM if node_solver == ADMM else ADMM

    def run(kind, l, u, warm):
        ws = engine(kind)
        ws.set_bounds(l, u)
        remaining = None if time_limit is None else max(1e-3, time_limit - (time.perf_counter() - t0))
        if kind == ADMM:
            ws.settings.time_limit = remaining
        else:
            ws.settings.time_limit_at = None if remaining is None else time.perf_counter() + remaining
        return ws.solve(warm_start=warm)

    def relax(fixings, warm):
        nonlocal iters
        l, u = red.bounds_with(fixings)
        res = run(node_solver, l, u, warm)
        iters += res.iterations
        if res.status == MAX_ITER:
            log.debug("%s relaxation unsettled; retrying with %s", node_solver, other)
            res2 = run(other, l, u, warm)
            iters += res2.iterations
            if res2.status != MAX_ITER:
                res = res2
        return res

    incumbent_x = None
    incumbent = np.inf

    def try_incumbent(fixings, warm, tag):
        nonlocal incumbent_x, incumbent
        res = relax(fixings, warm)
        if res.status != SOLVED:
            return None
        x = red.expand(res.x)
        x[red.bin_full] = np.array([fixings[j] for j in bins])
        viol = problem.max_violation(x, integrality=True)
        if viol > 1e-6:
            log.debug("%s candidate rejected: violation %.2e", tag, viol)
            return None
        obj = problem.objective(x)
        if obj < incumbent - 1e-12 * max(1.0, abs(obj)):
            incumbent, incumbent_x = obj, x
            log.debug("new incumbent %.10g from %s", obj, tag)
        return res

    root = relax({}, (None, None))
    if root.status == PRIMAL_INFEASIBLE:
        return finish(None, np.inf, INFEASIBLE, np.inf, 1, iters)
    if root.status == DUAL_INFEASIBLE:
        return finish(None, -np.inf, UNBOUNDED, -np.inf, 1, iters)
    root_obj = root.objective + red.offset
    if len(bins) == 0:
        x = red.expand(root.x)
        st = OPTIMAL if root.status == SOLVED else TIME_LIMIT
        node_log.append(NodeRecord(0, None, 0, root_obj, None, root_obj, root_obj, 0.0))
        return finish(x, problem.objective(x), st, problem.objective(x), 1, iters)

    vb = root.x[bins]
    rounded = {j: float(v >= 0.5) for j, v in zip(bins, vb)}
    try_incumbent(rounded, (root.x, root.y), "rounding")
    # switch on every binary the relaxation uses at all; for on/off linking rows
    # this keeps the relaxed continuous solution nearly intact
    ceiled = {j: float(v > INT_TOL) for j, v in zip(bins, vb)}
    if ceiled != rounded:
        try_incumbent(ceiled, (root.x, root.y), "ceiling")

    seq = itertools.count()
    heap: list[_Node] = []
    nodes = 1
    best_bound = root_obj
    pruned_min = np.inf

    def record(node_id, parent, depth, rel, prel, bound):
        gap = relative_gap(incumbent, bound)
        node_log.append(NodeRecord(node_id, parent, depth, rel, prel, bound, incumbent, gap))
        if verbose:
            log.info("node %d depth %d bound %.8g incumbent %.8g gap %.3e",
                     node_id, depth, bound, incumbent, gap)

    def cutoff():
        if not np.isfinite(incumbent):
            return np.inf
        return incumbent - mip_gap * max(abs(incumbent), 1.0)

    record(0, None, 0, root_obj, None, root_obj)

    def process(res, fixings, depth, node_id, bound):
        """Either close the node or return the two children (plunge first)."""
        xb = res.x[bins]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if np.all(frac <= INT_TOL):
            fx = dict(fixings)
            for j, v in zip(bins, xb):
                fx[j] = float(round(v))
            try_incumbent(fx, (res.x, res.y), f"node {node_id}")
            return []
        score = np.abs(xb - np.round(xb))
        pick = int(np.argmax(score))
        j = int(bins[pick])
        v = xb[pick]
        down = dict(fixings)
        down[j] = 0.0
        up = dict(fixings)
        up[j] = 1.0
        warm = (res.x, res.y)
        kids = [
            _Node(bound, next(seq), depth + 1, down, warm, node_id),
            _Node(bound, next(seq), depth + 1, up, warm, node_id),
        ]
        if v >= 0.5:
            kids.reverse()
        return kids

    status = None
    plunge = process(root, {}, 0, 0, root_obj)
    parent_rel = {0: root_obj}
    while True:
        if plunge:
            node, sibling = plunge[0], plunge[1]
            heapq.heappush(heap, sibling)
        elif heap:
            node = heapq.heappop(heap)
        else:
            break
        best_bound = min(min((nd.bound for nd in heap), default=np.inf), node.bound, pruned_min)
        if np.isfinite(incumbent):
            best_bound = min(best_bound, incumbent)
        if relative_gap(incumbent, best_bound) <= mip_gap:
            status = GAP_REACHED
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = TIME_LIMIT
            break
        if node_limit is not None and nodes >= node_limit:
            status = TIME_LIMIT
            break
        plunge = []
        if node.bound >= cutoff():
            pruned_min = min(pruned_min, node.bound)
            continue
        nodes += 1
        node_id = nodes - 1
        res = relax(node.lower, node.warm)
        if res.status == PRIMAL_INFEASIBLE:
            record(node_id, node.parent, node.depth, np.inf, parent_rel.get(node.parent), np.inf)
            continue
        rel = res.objective + red.offset
        parent_rel[node_id] = rel
        bound = max(rel, node.bound)
        record(node_id, node.parent, node.depth, rel, parent_rel.get(node.parent), bound)
        if res.status != SOLVED:
            log.warning("node %d relaxation ended with status %s", node_id, res.status)
        if bound >= cutoff():
            pruned_min = min(pruned_min, bound)
            continue
        plunge = process(res, node.lower, node.depth, node_id, bound)

    if status is None:
        status = OPTIMAL
        best_bound = min(incumbent, pruned_min)
    if incumbent_x is None:
        if status == OPTIMAL:
            return finish(None, np.inf, INFEASIBLE, np.inf, nodes, iters)
        return finish(None, np.inf, status, best_bound, nodes, iters)
    return finish(incumbent_x, incumbent, status, best_bound, nodes, iters)
