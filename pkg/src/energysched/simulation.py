"""Shrinking-horizon closed loop and its recorded trace.

At every hour the controller builds the scheduling MIQP over the hours left
in the day, solves it, applies the first hour of the plan to the plant model
and feeds the new buffer levels and delivered quantities back into the next
solve. The plant and the prediction model are the same linear balance, so the
loop is exact apart from the solver's feasibility tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BoundViolation,
    DimensionMismatch,
    InfeasibleReconstruction,
    SolveFailed,
    UnknownProduct,
)
from .formulation import HorizonState, MPCConfig, alpha, build_problem, extract_solution
from .io import fmt, read_csv, write_csv
from .network import ManufacturingNetwork, coupled_groups, step_dynamics
from .pricing import DayContext, PricingProgram, energy_rate
from .solver.bnb import GAP_REACHED, OPTIMAL, TIME_LIMIT, solve_miqp
from .solver.lpformat import write_lp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
# solver noise below this is recorded as an exact zero
SNAP_TOL = 1e-9


@dataclass
class ScheduleTrace:
    """Everything applied and measured during one simulated day.

    Row ``h`` of each array belongs to hour ``h``; ``x[h]`` holds the buffer
    levels *after* hour ``h`` has been applied.
    """

    buffer_ids: list
    process_ids: list
    product_ids: list
    machine_ids: list
    initial_x: np.ndarray
    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    delta: np.ndarray
    s: np.ndarray
    energy: np.ndarray
    price: np.ndarray
    alpha: np.ndarray
    gap: np.ndarray
    nodes: np.ndarray
    seconds: np.ndarray
    status: list = field(default_factory=list)
    horizon: int | None = None
    day: DayContext = field(default_factory=DayContext)
    program: str | None = None

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = len(self.energy)

    @property
    def n_steps(self) -> int:
        return len(self.energy)

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.energy))

    def energy_in(self, hours) -> float:
        hours = [h for h in hours if 0 <= h < self.n_steps]
        return float(np.sum(self.energy[hours])) if hours else 0.0

    def column(self, kind: str, ident) -> np.ndarray:
        """Series for one entity, e.g. ``column("u", 10)`` or ``column("x", 9)``."""
        ids = {"u": self.process_ids, "d": self.product_ids, "s": self.product_ids,
               "x": self.buffer_ids, "delta": self.machine_ids}[kind]
        try:
            j = list(ids).index(ident)
        except ValueError:
            raise KeyError(f"no {kind} column for id {ident!r}") from None
        return getattr(self, kind)[:, j]


def _machine_activation(network: ManufacturingNetwork, group_delta: np.ndarray) -> np.ndarray:
    groups = coupled_groups(network)
    group_of = np.empty(network.n_u, dtype=int)
    for g, members in enumerate(groups):
        group_of[list(members)] = g
    out = np.zeros(network.n_m)
    for j, p in enumerate(network.processes):
        out[network.machines.index(p.machine)] = group_delta[group_of[j]]
    return out


def _snap(v: np.ndarray) -> np.ndarray:
    v = np.where(np.abs(v) < SNAP_TOL, 0.0, v)
    return v + 0.0


def run_closed_loop(network: ManufacturingNetwork, program: PricingProgram, config: MPCConfig,
                    initial_x=None, day: DayContext = DayContext(), *, export_dir=None,
                    verbose: bool = False, qp_settings=None) -> ScheduleTrace:
    """Simulate one production day under ``program`` and return the trace.

    A step whose MIQP has no usable solution is retried once with the
    shortfall allowance doubled; a second failure raises
    :class:`SolveFailed` carrying the hour.
    """
    H = config.H
    x = np.zeros(network.n_x) if initial_x is None else np.asarray(initial_x, dtype=float).copy()
    if x.shape != (network.n_x,):
        raise DimensionMismatch(f"initial levels need {network.n_x} entries, got {x.shape}")
    if np.any(x < network.x_min - FEAS_TOL) or np.any(x > network.x_max + FEAS_TOL):
        raise BoundViolation("initial buffer levels lie outside their bounds")
    state = HorizonState.cold_start(network, x)
    big_m = config.big_m(network)
    if export_dir is not None:
        export_dir = Path(export_dir)
        export_dir.mkdir(parents=True, exist_ok=True)

    rec = {k: [] for k in ("x", "u", "d", "delta", "s", "energy", "price", "alpha", "gap",
                           "nodes", "seconds", "status")}
    for h in range(H):
        L = H - h
        sol = hsol = None
        scale = 1.0
        for scale in (1.0, 2.0):
            problem = build_problem(network, program, config, state, day, alpha_scale=scale)
            if export_dir is not None and scale == 1.0:
                write_lp(problem, export_dir / f"step_{h:02d}.lp")
            sol = solve_miqp(problem, config.mip_gap, config.time_limit, verbose=verbose,
                             settings=qp_settings)
            if sol.status in (OPTIMAL, GAP_REACHED, TIME_LIMIT) and sol.has_solution:
                try:
                    hsol = extract_solution(problem, sol.values, tol=FEAS_TOL)
                    break
                except InfeasibleReconstruction as exc:
                    log.warning("hour %d: solution rejected (%s)", h, exc)
            if scale == 1.0:
                log.warning("hour %d: solve ended with status %s; retrying with the "
                            "shortfall allowance doubled", h, sol.status)
        if hsol is None:
            raise SolveFailed(h, sol.status, "no usable schedule after retry")

        on = (hsol.delta[0] > 0.5).astype(float)
        u_cap = np.minimum(big_m * on[problem.layout.group_of], network.u_max)
        u = np.clip(_snap(hsol.u[0]), 0.0, u_cap)
        u = np.where(on[problem.layout.group_of] > 0, np.maximum(u, network.u_min), u)
        d = np.maximum(_snap(hsol.d[0]), 0.0)
        s = np.maximum(_snap(hsol.s[0]), 0.0)
        x_next = step_dynamics(network, x, u, d)
        low = network.x_min - FEAS_TOL
        high = network.x_max + FEAS_TOL
        if np.any(x_next < low) or np.any(x_next > high):
            raise BoundViolation(f"hour {h}: buffer levels {x_next} left their bounds")

        rec["x"].append(x_next)
        rec["u"].append(u)
        rec["d"].append(d)
        rec["delta"].append(_machine_activation(network, on))
        rec["s"].append(s)
        rec["energy"].append(float(u @ network.energy_intensity))
        rec["price"].append(energy_rate(program, h, day))
        rec["alpha"].append(alpha(config, h, 0, L) * scale)
        rec["gap"].append(sol.rel_gap)
        rec["nodes"].append(sol.nodes)
        rec["seconds"].append(sol.solve_time)
        rec["status"].append(sol.status if scale == 1.0 else f"{sol.status}+retry")
        log.info("hour %2d: energy %.3f kWh, status %s, %d nodes, %.2fs", h, rec["energy"][-1],
                 sol.status, sol.nodes, sol.solve_time)

        x = x_next
        state = HorizonState(h + 1, x.copy(), state.produced + d, u.copy())

    return ScheduleTrace(
        buffer_ids=[b.id for b in network.buffers],
        process_ids=[p.id for p in network.processes],
        product_ids=[p.id for p in network.products],
        machine_ids=list(network.machines),
        initial_x=np.asarray(initial_x if initial_x is not None else np.zeros(network.n_x),
                             dtype=float),
        x=np.array(rec["x"]).reshape(H, network.n_x),
        u=np.array(rec["u"]).reshape(H, network.n_u),
        d=np.array(rec["d"]).reshape(H, network.n_d),
        delta=np.array(rec["delta"]).reshape(H, network.n_m),
        s=np.array(rec["s"]).reshape(H, network.n_d),
        energy=np.array(rec["energy"]),
        price=np.array(rec["price"]),
        alpha=np.array(rec["alpha"]),
        gap=np.array(rec["gap"], dtype=float),
        nodes=np.array(rec["nodes"], dtype=int),
        seconds=np.array(rec["seconds"]),
        status=rec["status"],
        horizon=H,
        day=day,
        program=program.name,
    )


def cumulative_production(trace: ScheduleTrace, product_id) -> np.ndarray:
    """Running total of delivered units of one product, one entry per hour."""
    if product_id not in trace.product_ids:
        raise UnknownProduct(product_id)
    return np.cumsum(trace.column("d", product_id))


# -- CSV ----------------------------------------------------------------------

RATE_DECIMALS = 5
QTY_DECIMALS = 3


def trace_header(trace: ScheduleTrace) -> list[str]:
    return (["hour", "price_usd_per_kwh", "energy_kwh"]
            + [f"u_{i}" for i in trace.process_ids]
            + [f"d_{i}" for i in trace.product_ids]
            + [f"x_{i}" for i in trace.buffer_ids]
            + [f"delta_m{i}" for i in trace.machine_ids]
            + [f"s_{i}" for i in trace.product_ids]
            + ["alpha", "solver_gap", "solver_nodes", "solve_seconds"])


def write_trace_csv(trace: ScheduleTrace, path) -> None:
    q = QTY_DECIMALS
    rows = []
    for h in range(trace.n_steps):
        gap = trace.gap[h]
        rows.append(
            [str(h), fmt(trace.price[h], RATE_DECIMALS), fmt(trace.energy[h], q)]
            + [fmt(v, q) for v in trace.u[h]]
            + [fmt(v, q) for v in trace.d[h]]
            + [fmt(v, q) for v in trace.x[h]]
            + [str(int(round(v))) for v in trace.delta[h]]
            + [fmt(v, q) for v in trace.s[h]]
            + [fmt(trace.alpha[h], RATE_DECIMALS),
               fmt(gap, 6) if np.isfinite(gap) else "inf",
               str(int(trace.nodes[h])), fmt(trace.seconds[h], 3)]
        )
    write_csv(path, trace_header(trace), rows)


class TraceFormatError(ValueError):
    """A trace CSV that does not have the expected layout."""


def read_trace_csv(path, initial_x=None) -> ScheduleTrace:
    """Load a trace written by :func:`write_trace_csv`.

    Values carry the file's rounding. Initial levels default to zero.
    """
    header, rows = read_csv(path)
    fixed = ["hour", "price_usd_per_kwh", "energy_kwh"]
    tail = ["alpha", "solver_gap", "solver_nodes", "solve_seconds"]
    if header[:3] != fixed or header[-4:] != tail:
        raise TraceFormatError(f"{path}: not a trace file (header {header[:3]}...{header[-4:]})")

    def ids(prefix):
        cols = [i for i, c in enumerate(header) if c.startswith(prefix)]
        return cols, [int(header[i][len(prefix):]) for i in cols]

    cols = {k: ids(p) for k, p in (("u", "u_"), ("d", "d_"), ("x", "x_"),
                                    ("delta", "delta_m"), ("s", "s_"))}
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise TraceFormatError(f"{path}: non-numeric entry ({exc})") from None
    if data.size == 0:
        data = data.reshape(0, len(header))
    if data.shape[1] != len(header):
        raise TraceFormatError(f"{path}: rows have {data.shape[1]} fields, header {len(header)}")
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise TraceFormatError(f"{path}: hours must run 0, 1, 2, ...")
    n_x = len(cols["x"][1])

    def block(k):
        return data[:, cols[k][0]]

    return ScheduleTrace(
        buffer_ids=cols["x"][1], process_ids=cols["u"][1], product_ids=cols["d"][1],
        machine_ids=cols["delta"][1],
        initial_x=np.zeros(n_x) if initial_x is None else np.asarray(initial_x, float),
        x=block("x"), u=block("u"), d=block("d"), delta=block("delta"), s=block("s"),
        energy=data[:, 2], price=data[:, 1], alpha=data[:, -4], gap=data[:, -3],
        nodes=data[:, -2].astype(int), seconds=data[:, -1],
        status=["loaded"] * len(data),
    )
