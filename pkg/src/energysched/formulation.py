"""Per-step MIQP of the energy-aware shrinking-horizon scheduler.

For a plant at production step ``h`` of an ``H``-step day, the prediction
covers the remaining ``L = H - h`` steps. Decision variables per prediction
step ``k`` are the process rates ``u(k)``, deliveries ``d(k)``, production
slacks ``s(k)`` and one on/off binary per coupled process group (so every
process sharing a machine switches together). Buffer levels are affine in
the decisions through the balance ``x(k+1) = x(k) + B u(k) + E d(k)`` and are
substituted out unless ``eliminate_states`` is off.

Objective, summed over the prediction::

    w_x |x(.)|^2 + w_u |u(k) - u(k-1)|^2 + w_s sum_p s_p(k) + w_e rate(k) sum_j eps_j u_j(k)
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyHorizon, InfeasibleBoundsDetected, InfeasibleReconstruction
from .network import ManufacturingNetwork, coupled_groups, step_dynamics
from .pricing import DayContext, PricingProgram, rate_vector
from .problem import MIQPProblem

SHRINKING = "shrinking"
FIXED = "fixed"
POST_STEP = "post"
PRE_STEP = "pre"
TERMINAL = "terminal"
EVERY_STEP = "all"

ROW_TAGS = {
    "balance": "buffer balance (explicit states only)",
    "level_bounds": "buffer level bounds",
    "outflow": "outflow limited by stock",
    "delivery": "delivery limited by stock",
    "rate_off": "rate off when machine group is off",
    "rate_on": "minimum rate when machine group is on",
    "requirement": "cumulative production requirement",
}


@dataclass(frozen=True)
class MPCConfig:
    """Controller settings. Defaults reproduce the reference case study."""

    N: int = 24
    H: int = 24
    w_x: float = 1.0
    w_u: float = 0.5
    w_s: float = 1000.0
    w_e: float = 500.0
    tau: float = 0.05
    xi: float = 0.5
    big_M: tuple | None = None
    min_active_rate: float = 1e-3
    mip_gap: float = 1e-3
    time_limit: float = 60.0
    eta_mode: str = SHRINKING
    state_penalty: str = POST_STEP
    requirement_steps: str = TERMINAL
    eliminate_states: bool = True

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not 0 <= self.xi <= 1:
            raise ValueError("xi must lie in [0, 1]")
        if self.N > self.H or self.N < 1:
            raise ValueError("need 1 <= N <= H")
        if self.min_active_rate <= 0:
            raise ValueError("min_active_rate must be positive")
        if self.mip_gap <= 0:
            raise ValueError("mip_gap must be positive")
        if self.eta_mode not in (SHRINKING, FIXED):
            raise ValueError(f"eta_mode must be {SHRINKING!r} or {FIXED!r}")
        if self.state_penalty not in (POST_STEP, PRE_STEP):
            raise ValueError(f"state_penalty must be {POST_STEP!r} or {PRE_STEP!r}")
        if self.requirement_steps not in (TERMINAL, EVERY_STEP):
            raise ValueError(f"requirement_steps must be {TERMINAL!r} or {EVERY_STEP!r}")
        for w in (self.w_x, self.w_u, self.w_s, self.w_e):
            if w < 0:
                raise ValueError("objective weights must be non-negative")

    def big_m(self, network: ManufacturingNetwork) -> np.ndarray:
        if self.big_M is None:
            return network.u_max
        bm = np.asarray(self.big_M, dtype=float)
        if bm.shape != (network.n_u,):
            raise ValueError(f"big_M needs {network.n_u} entries")
        if np.any(bm < network.u_max):
            raise ValueError("big_M must be at least u_max for every process")
        return bm


@dataclass
class HorizonState:
    """Measurements at production step ``h``."""

    h: int
    x0: np.ndarray
    produced: np.ndarray
    u_prev: np.ndarray

    @classmethod
    def cold_start(cls, network: ManufacturingNetwork, x0=None) -> "HorizonState":
        x0 = np.zeros(network.n_x) if x0 is None else np.asarray(x0, dtype=float)
        return cls(0, x0, np.zeros(network.n_d), np.zeros(network.n_u))


def alpha(config: MPCConfig, h: int, k: int, L: int) -> float:
    """Allowed shortfall fraction at prediction step ``k`` of the solve made at step ``h``.

    The progress metric mixes how far the day has advanced with how deep
    into the prediction the step lies; tolerance shrinks linearly with it.
    """
    horizon = L if config.eta_mode == SHRINKING else config.N
    eta = h / config.H + k / (2.0 * horizon)
    return config.tau * (1.0 - eta * (1.0 - config.xi))


@dataclass
class HorizonLayout:
    """Column bookkeeping for one built problem."""

    L: int
    h: int
    groups: list
    group_of: np.ndarray
    u: np.ndarray
    d: np.ndarray
    s: np.ndarray
    b: np.ndarray
    x: np.ndarray | None
    x0: np.ndarray
    produced: np.ndarray
    u_prev: np.ndarray
    rates: np.ndarray
    alphas: np.ndarray
    big_m: np.ndarray
    config: MPCConfig
    network: ManufacturingNetwork = field(repr=False)


@dataclass
class HorizonSolution:
    u: np.ndarray
    d: np.ndarray
    s: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    process_active: np.ndarray


class _Rows:
    def __init__(self, n):
        self.n = n
        self.blocks = []
        self.lo = []
        self.hi = []
        self.tags = []
        self.names = []

    def add(self, M, lo, hi, tag, names):
        M = sp.csr_matrix(M)
        if M.shape[0] == 0:
            return
        self.blocks.append(M)
        self.lo.append(np.broadcast_to(np.asarray(lo, dtype=float), (M.shape[0],)))
        self.hi.append(np.broadcast_to(np.asarray(hi, dtype=float), (M.shape[0],)))
        self.tags += [tag] * M.shape[0]
        self.names += list(names)

    def build(self):
        if not self.blocks:
            return sp.csr_matrix((0, self.n)), np.zeros(0), np.zeros(0)
        return (sp.vstack(self.blocks, format="csr"), np.concatenate(self.lo),
                np.concatenate(self.hi))


def _selector(cols: np.ndarray, n: int, coef=None) -> sp.csr_matrix:
    """Row ``i`` picks column ``cols[i]`` (times ``coef[i]``)."""
    cols = np.asarray(cols, dtype=int)
    data = np.ones(len(cols)) if coef is None else np.asarray(coef, dtype=float)
    return sp.csr_matrix((data, (np.arange(len(cols)), cols)), shape=(len(cols), n))


def _scatter(M, cols: np.ndarray, n: int) -> sp.csr_matrix:
    """Place the columns of ``M`` at positions ``cols`` of an ``n``-column matrix."""
    M = sp.coo_matrix(M)
    return sp.csr_matrix((M.data, (M.row, np.asarray(cols)[M.col])), shape=(M.shape[0], n))


def build_problem(network: ManufacturingNetwork, program: PricingProgram, config: MPCConfig,
                  state: HorizonState, day: DayContext = DayContext(), *,
                  alpha_scale: float = 1.0, rates: Sequence[float] | None = None) -> MIQPProblem:
    """Assemble the MIQP solved at production step ``state.h``.

    ``rates`` overrides the tariff lookup (one energy price per remaining
    step); ``alpha_scale`` widens the shortfall allowance, used when a step
    has to be retried.
    """
    H = config.H
    h = int(state.h)
    L = H - h
    if L < 1:
        raise EmptyHorizon(f"no steps left at h={h} (H={H})")
    net = network
    n_x, n_u, n_d = net.n_x, net.n_u, net.n_d
    x0 = np.asarray(state.x0, dtype=float)
    produced = np.asarray(state.produced, dtype=float)
    u_prev = np.asarray(state.u_prev, dtype=float)
    if x0.shape != (n_x,) or produced.shape != (n_d,) or u_prev.shape != (n_u,):
        raise InfeasibleBoundsDetected("horizon state has the wrong dimensions")
    tol = 1e-6
    if np.any(x0 < net.x_min - tol) or np.any(x0 > net.x_max + tol):
        raise InfeasibleBoundsDetected(f"initial levels {x0} outside buffer bounds")
    if np.any(produced < -tol):
        raise InfeasibleBoundsDetected("completed production must be non-negative")
    bigm = config.big_m(net)
    if np.any(bigm < net.u_min) or np.any(net.u_min > net.u_max):
        raise InfeasibleBoundsDetected("rate bounds are inconsistent")

    groups = coupled_groups(net)
    n_g = len(groups)
    group_of = np.empty(n_u, dtype=int)
    for g, members in enumerate(groups):
        group_of[list(members)] = g

    explicit = not config.eliminate_states
    per_step = n_u + 2 * n_d + n_g + (n_x if explicit else 0)
    n = per_step * L
    base = np.arange(L)[:, None] * per_step
    u_cols = base + np.arange(n_u)
    d_cols = base + n_u + np.arange(n_d)
    s_cols = base + n_u + n_d + np.arange(n_d)
    b_cols = base + n_u + 2 * n_d + np.arange(n_g)
    x_cols = base + n_u + 2 * n_d + n_g + np.arange(n_x) if explicit else None

    if rates is None:
        rates = rate_vector(program, h, L, day)
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (L,):
        raise ValueError(f"expected {L} energy rates, got {rates.shape}")
    alphas = np.array([alpha(config, h, k, L) for k in range(L)]) * alpha_scale

    # x(k) = S[k] z + const[k] for k = 0..L
    S = [sp.csr_matrix((n_x, n))]
    const = [x0.copy()]
    if explicit:
        for k in range(L):
            S.append(_selector(x_cols[k], n))
            const.append(np.zeros(n_x))
    else:
        for k in range(L):
            step = _scatter(net.B, u_cols[k], n) + _scatter(net.E, d_cols[k], n)
            S.append((S[k] + step).tocsr())
            const.append(x0.copy())

    names = [""] * n
    var_map = {}
    for k in range(L):
        for j, p in enumerate(net.processes):
            names[u_cols[k, j]] = f"u{p.id}_{k}"
            var_map[("u", p.id, k)] = int(u_cols[k, j])
        for q, p in enumerate(net.products):
            names[d_cols[k, q]] = f"d{p.id}_{k}"
            names[s_cols[k, q]] = f"s{p.id}_{k}"
            var_map[("d", p.id, k)] = int(d_cols[k, q])
            var_map[("s", p.id, k)] = int(s_cols[k, q])
        for g, members in enumerate(groups):
            tag = "_".join(str(net.processes[j].id) for j in members)
            names[b_cols[k, g]] = f"b{tag}_{k}"
            var_map[("delta", g, k)] = int(b_cols[k, g])
        if explicit:
            for i, b in enumerate(net.buffers):
                names[x_cols[k, i]] = f"x{b.id}_{k + 1}"
                var_map[("x", b.id, k + 1)] = int(x_cols[k, i])

    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    goals = net.goals
    for k in range(L):
        lb[u_cols[k]] = net.u_min
        ub[u_cols[k]] = net.u_max
        lb[d_cols[k]] = 0.0
        lb[s_cols[k]] = 0.0
        ub[s_cols[k]] = alphas[k] * goals
        lb[b_cols[k]] = 0.0
        ub[b_cols[k]] = 1.0
        if explicit:
            lb[x_cols[k]] = net.x_min
            ub[x_cols[k]] = net.x_max

    rows = _Rows(n)
    bids = [b.id for b in net.buffers]
    out_rows = np.flatnonzero(np.diff(net.B_o.tocsr().indptr) > 0)
    fin_rows = np.flatnonzero(np.diff(net.E.tocsr().indptr) > 0)
    eps = config.min_active_rate
    I_u = sp.identity(n_u, format="csr")
    for k in range(L):
        if explicit:
            bal = S[k + 1] - S[k] - _scatter(net.B, u_cols[k], n) - _scatter(net.E, d_cols[k], n)
            rows.add(bal, const[k], const[k], "balance", [f"bal{i}_{k}" for i in bids])
        else:
            rows.add(S[k + 1], net.x_min - const[k + 1], net.x_max - const[k + 1], "level_bounds",
                     [f"xb{i}_{k + 1}" for i in bids])
        Sk = S[k].tocsr()
        outflow = (Sk + _scatter(net.B_o, u_cols[k], n))[out_rows]
        rows.add(outflow, -const[k][out_rows], np.inf, "outflow",
                 [f"out{bids[i]}_{k}" for i in out_rows])
        deliver = (Sk + _scatter(net.E, d_cols[k], n))[fin_rows]
        rows.add(deliver, -const[k][fin_rows], np.inf, "delivery",
                 [f"dlv{bids[i]}_{k}" for i in fin_rows])
        onoff_hi = _scatter(I_u, u_cols[k], n) - _selector(b_cols[k][group_of], n, bigm)
        rows.add(onoff_hi, -np.inf, 0.0, "rate_off",
                 [f"off{p.id}_{k}" for p in net.processes])
        onoff_lo = _scatter(I_u, u_cols[k], n) - _selector(b_cols[k][group_of], n,
                                                          np.full(n_u, eps))
        rows.add(onoff_lo, 0.0, np.inf, "rate_on", [f"on{p.id}_{k}" for p in net.processes])

    req_steps = [L - 1] if config.requirement_steps == TERMINAL else list(range(L))
    remaining = goals - produced
    for k in req_steps:
        cum = sum(_selector(d_cols[t], n) for t in range(k + 1))
        M = cum + _selector(s_cols[k], n)
        rows.add(M, remaining, np.inf, "requirement", [f"req{p.id}_{k}" for p in net.products])

    A, rl, ru = rows.build()

    # objective
    pen = list(range(1, L + 1)) if config.state_penalty == POST_STEP else list(range(0, L))
    Sx = sp.vstack([S[k] for k in pen], format="csr")
    cx = np.concatenate([const[k] for k in pen])
    Q = 2.0 * config.w_x * (Sx.T @ Sx)
    c = 2.0 * config.w_x * (Sx.T @ cx)
    offset = config.w_x * float(cx @ cx)

    Du = _scatter(I_u, u_cols[0], n)
    du_const = [-u_prev]
    blocks = [Du]
    for k in range(1, L):
        blocks.append(_scatter(I_u, u_cols[k], n) - _scatter(I_u, u_cols[k - 1], n))
        du_const.append(np.zeros(n_u))
    Dm = sp.vstack(blocks, format="csr")
    dc = np.concatenate(du_const)
    Q = Q + 2.0 * config.w_u * (Dm.T @ Dm)
    c = c + 2.0 * config.w_u * (Dm.T @ dc)
    offset += config.w_u * float(dc @ dc)

    c = np.asarray(c, dtype=float).ravel()
    c[s_cols.ravel()] += config.w_s
    eps_j = net.energy_intensity
    for k in range(L):
        c[u_cols[k]] += config.w_e * rates[k] * eps_j

    Q = sp.csc_matrix(Q)
    Q = ((Q + Q.T) * 0.5).tocsc()
    Q.eliminate_zeros()

    layout = HorizonLayout(
        L=L, h=h, groups=groups, group_of=group_of, u=u_cols, d=d_cols, s=s_cols, b=b_cols,
        x=x_cols, x0=x0, produced=produced, u_prev=u_prev, rates=rates, alphas=alphas,
        big_m=bigm, config=config, network=net,
    )
    return MIQPProblem(
        Q=Q, c=c, A=A, row_lower=rl, row_upper=ru, var_lower=lb, var_upper=ub,
        binary=b_cols.ravel().copy(), offset=offset, var_names=names, row_names=rows.names,
        row_tags=rows.tags, var_map=var_map, layout=layout,
    )


def extract_solution(problem: MIQPProblem, raw, tol: float = 1e-6) -> HorizonSolution:
    """Split a solver vector into trajectories and audit it against the model.

    Buffer levels are recomputed from the balance equation starting at the
    measured levels, so the returned ``x`` has ``L + 1`` rows (``x[0]`` is the
    measurement).
    """
    lay: HorizonLayout = problem.layout
    z = np.asarray(raw, dtype=float)
    if z.shape != (problem.n_vars,):
        raise InfeasibleReconstruction(
            f"solution has {z.shape} entries, problem has {problem.n_vars}")
    viol = problem.max_violation(z)
    if viol > tol:
        worst = _worst_row(problem, z)
        raise InfeasibleReconstruction(f"constraint violated by {viol:.3e} ({worst})")
    net = lay.network
    u = z[lay.u]
    d = z[lay.d]
    s = z[lay.s]
    delta = z[lay.b]
    x = np.empty((lay.L + 1, net.n_x))
    x[0] = lay.x0
    for k in range(lay.L):
        x[k + 1] = step_dynamics(net, x[k], u[k], d[k])
    if np.any(x[1:] < net.x_min - tol) or np.any(x[1:] > net.x_max + tol):
        raise InfeasibleReconstruction("reconstructed buffer levels leave their bounds")
    return HorizonSolution(u=u, d=d, s=s, delta=delta, x=x, process_active=delta[:, lay.group_of])


def _worst_row(problem: MIQPProblem, z) -> str:
    if problem.n_rows == 0:
        return "variable bounds"
    Az = problem.A @ z
    v = np.maximum(problem.row_lower - Az, 0) + np.maximum(Az - problem.row_upper, 0)
    i = int(np.argmax(v))
    if v[i] <= 0:
        return "variable bounds"
    return f"row {problem.row_names[i]} [{problem.row_tags[i] if problem.row_tags else ''}]"


def objective_terms(problem: MIQPProblem, raw) -> dict:
    """Evaluate the four objective components directly from trajectories."""
    lay: HorizonLayout = problem.layout
    cfg = lay.config
    net = lay.network
    z = np.asarray(raw, dtype=float)
    u = z[lay.u]
    d = z[lay.d]
    s = z[lay.s]
    x = np.empty((lay.L + 1, net.n_x))
    x[0] = lay.x0
    for k in range(lay.L):
        x[k + 1] = x[k] + net.B @ u[k] + net.E @ d[k]
    xs = x[1:] if cfg.state_penalty == POST_STEP else x[:-1]
    prev = np.vstack([lay.u_prev[None, :], u[:-1]])
    return {
        "buffer": cfg.w_x * float(np.sum(xs ** 2)),
        "smoothing": cfg.w_u * float(np.sum((u - prev) ** 2)),
        "slack": cfg.w_s * float(np.sum(s)),
        "energy": cfg.w_e * float(np.sum(lay.rates * (u @ net.energy_intensity))),
    }


def with_overrides(config: MPCConfig, **kw) -> MPCConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(config, **kw)
