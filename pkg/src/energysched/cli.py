"""Command-line front end.

``energysched run``       simulate one day under one or more tariffs
``energysched validate``  check a scenario file and print its structure
``energysched plotdata``  turn a trace into per-chart tables
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .accounting import CostBreakdown, settle
from .errors import (
    BoundViolation,
    DimensionMismatch,
    EmptyHorizon,
    EnergySchedError,
    IncompleteTrace,
    InfeasibleBoundsDetected,
    ScenarioError,
    SolveFailed,
    TariffError,
)
from .formulation import FIXED, SHRINKING, with_overrides
from .io import fmt, load_scenario, load_tariff, resolve_tariff, write_csv
from .network import FINAL, SOURCE, coupled_group_ids
from .simulation import (
    TraceFormatError,
    cumulative_production,
    read_trace_csv,
    run_closed_loop,
    write_trace_csv,
)

log = logging.getLogger("energysched")

EXIT_USAGE = 2
STAGE_EXIT = {"parse": 3, "build": 4, "solve": 5, "settle": 6, "io": 7}


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _stage_of(exc: BaseException) -> str:
    if isinstance(exc, StageError):
        return exc.stage
    if isinstance(exc, (ScenarioError, TariffError)):
        return "parse"
    if isinstance(exc, (InfeasibleBoundsDetected, EmptyHorizon, DimensionMismatch)):
        return "build"
    if isinstance(exc, (SolveFailed, BoundViolation)):
        return "solve"
    if isinstance(exc, IncompleteTrace):
        return "settle"
    if isinstance(exc, OSError):
        return "io"
    return "solve" if isinstance(exc, EnergySchedError) else "build"


# -- run ----------------------------------------------------------------------

def _run_one(job: dict) -> dict:
    """Simulate and settle one tariff; executed in a worker when ``--jobs > 1``."""
    logging.basicConfig(level=logging.INFO if job["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = load_scenario(job["scenario"])
        program = load_tariff(job["tariff"], seed=job["seed"])
        config = with_overrides(scenario.config, **job["overrides"])
    except (ScenarioError, TariffError, FileNotFoundError, ValueError) as exc:
        raise StageError("parse", str(exc)) from None
    outdir = Path(job["outdir"])
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("io", str(exc)) from None
    try:
        trace = run_closed_loop(scenario.network, program, config, scenario.initial_x,
                                scenario.day, verbose=job["verbose"],
                                export_dir=outdir / "lp" if job["export"] else None)
    except (SolveFailed, BoundViolation) as exc:
        raise StageError("solve", str(exc)) from None
    except OSError as exc:
        raise StageError("io", str(exc)) from None
    except (EnergySchedError, ValueError) as exc:
        raise StageError("build", str(exc)) from None
    try:
        cost = settle(trace, program)
    except (EnergySchedError, ValueError) as exc:
        raise StageError("settle", str(exc)) from None
    try:
        write_trace_csv(trace, outdir / "trace.csv")
        _write_solver_stats(trace, outdir / "solver_stats.csv")
        _write_summary(outdir / "summary.yaml", scenario, job, program, trace, cost)
    except OSError as exc:
        raise StageError("io", str(exc)) from None
    return {"name": job["name"], "cost": cost, "energy": trace.total_energy}


def _write_solver_stats(trace, path):
    rows = [[str(h), trace.status[h], str(int(trace.nodes[h])),
             fmt(trace.gap[h], 6) if np.isfinite(trace.gap[h]) else "inf",
             fmt(trace.alpha[h], 5), fmt(trace.seconds[h], 3)]
            for h in range(trace.n_steps)]
    write_csv(path, ["hour", "status", "nodes", "rel_gap", "alpha", "solve_seconds"], rows)


def _write_summary(path, scenario, job, program, trace, cost: CostBreakdown):
    doc = {
        "scenario": scenario.name,
        "tariff": str(job["tariff"]),
        "program": program.display_name,
        "hours": trace.n_steps,
        "energy_kwh": float(fmt(trace.total_energy, 3)),
        "costs_usd": {
            "basic": float(fmt(cost.basic, 2)),
            "demand": float(fmt(cost.demand, 2)),
            "usage": float(fmt(cost.usage, 2)),
            "total": float(fmt(cost.total, 2)),
        },
        "peak_power_kw": float(fmt(cost.peak_power, 3)),
        "cpp_credit_applied": bool(cost.cpp_credit_applied),
        "production": {int(p): float(fmt(cumulative_production(trace, p)[-1], 3))
                       for p in trace.product_ids},
        "settings": {k: v for k, v in job["overrides"].items() if v is not None},
    }
    if job["seed"] is not None:
        doc["settings"]["seed"] = job["seed"]
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


COMPARISON_HEADER = ["program", "basic_usd", "demand_usd", "usage_usd", "total_usd",
                     "peak_power_kw", "energy_kwh", "cpp_credit"]


def _comparison_rows(results):
    return [[r["cost"].program, fmt(r["cost"].basic, 2), fmt(r["cost"].demand, 2),
             fmt(r["cost"].usage, 2), fmt(r["cost"].total, 2), fmt(r["cost"].peak_power, 3),
             fmt(r["energy"], 3), "yes" if r["cost"].cpp_credit_applied else "no"]
            for r in results]


def _write_comparison(outdir: Path, results):
    rows = _comparison_rows(results)
    write_csv(outdir / "comparison.csv", COMPARISON_HEADER, rows)
    titles = ["Program", "Basic", "Demand", "Usage", "Total", "Peak kW", "Energy kWh", "Credit"]
    table = [titles] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(titles))]
    lines = []
    for n, r in enumerate(table):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    (outdir / "comparison.txt").write_text("\n".join(lines) + "\n")
    return "\n".join(lines)


def _run_name(tariff: str, used: set) -> str:
    base = Path(tariff).stem if Path(tariff).suffix else str(tariff)
    name, i = base, 2
    while name in used:
        name, i = f"{base}_{i}", i + 1
    used.add(name)
    return name


def cmd_run(args) -> int:
    if not args.tariff:
        print("energysched run: at least one --tariff is required", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail("io", str(exc))
    # surface missing files and malformed scenarios before any solving starts
    try:
        load_scenario(args.scenario)
        for t in args.tariff:
            resolve_tariff(t)
    except (ScenarioError, TariffError, FileNotFoundError) as exc:
        return _fail("parse", str(exc))
    overrides = {
        "mip_gap": args.mip_gap, "time_limit": args.time_limit, "eta_mode": args.eta_mode,
        "w_x": args.w_x, "w_u": args.w_u, "w_s": args.w_s, "w_e": args.w_e,
    }
    used: set = set()
    jobs = [{
        "name": _run_name(t, used), "scenario": args.scenario, "tariff": t, "seed": args.seed,
        "overrides": overrides, "export": args.export_problems, "verbose": args.verbose,
    } for t in args.tariff]
    for j in jobs:
        j["outdir"] = str(outdir / j["name"])
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(args.jobs, len(jobs))) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
    except StageError as exc:
        return _fail(exc.stage, str(exc))
    except Exception as exc:  # noqa: BLE001 - report the stage, then exit nonzero
        return _fail(_stage_of(exc), f"{type(exc).__name__}: {exc}")
    try:
        text = _write_comparison(outdir, results)
    except OSError as exc:
        return _fail("io", str(exc))
    print(text)
    return 0


def _fail(stage: str, message: str) -> int:
    print(f"energysched: {stage} stage failed: {message}", file=sys.stderr)
    return STAGE_EXIT[stage]


# -- validate -------------------------------------------------------------------

def _reachable_finals(network) -> set:
    """Final buffers that material from the source can reach."""
    seen, frontier = set(), [SOURCE]
    while frontier:
        node = frontier.pop()
        for p in network.processes:
            if p.origin == node and p.destination not in seen:
                seen.add(p.destination)
                frontier.append(p.destination)
    return {b.id for b in network.buffers if b.kind == FINAL and b.id in seen}


def cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except (ScenarioError, TariffError, FileNotFoundError) as exc:
        print(f"invariant check failed: {exc}")
        return STAGE_EXIT["parse"]
    net = sc.network
    groups = coupled_group_ids(net)
    shared = [g for g in groups if len(g) > 1]
    print(f"scenario:   {sc.name}")
    print(f"buffers:    {net.n_x}")
    print(f"processes:  {net.n_u}")
    print(f"machines:   {net.n_m}")
    print(f"products:   {net.n_d}")
    print("coupled groups: " + (", ".join("{" + ",".join(map(str, g)) + "}" for g in shared)
                                or "none"))
    print(f"binaries per step: {len(groups)}")
    checks = []
    x0 = sc.initial_x
    checks.append(("initial levels within bounds",
                   bool(np.all(x0 >= net.x_min) and np.all(x0 <= net.x_max)), ""))
    C = net.C.toarray()
    checks.append(("coupling matrix symmetric with zero diagonal",
                   bool(np.array_equal(C, C.T) and not np.any(np.diag(C))), ""))
    finals = {b.id for b in net.buffers if b.kind == FINAL}
    unreachable = sorted(finals - _reachable_finals(net))
    checks.append(("every final buffer reachable from the source", not unreachable,
                   f"unreachable: {unreachable}" if unreachable else ""))
    ok = True
    for name, passed, note in checks:
        ok &= passed
        print(f"  [{'ok' if passed else 'FAIL'}] {name}{' (' + note + ')' if note else ''}")
    return 0 if ok else STAGE_EXIT["parse"]


# -- plotdata -------------------------------------------------------------------

def cmd_plotdata(args) -> int:
    try:
        trace = read_trace_csv(args.trace)
    except (TraceFormatError, OSError) as exc:
        print(f"energysched: malformed trace: {exc}", file=sys.stderr)
        return STAGE_EXIT["parse"]
    try:
        sc = load_scenario(args.scenario)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"energysched: parse stage failed: {exc}", file=sys.stderr)
        return STAGE_EXIT["parse"]
    net = sc.network
    if (sorted(trace.process_ids) != sorted(p.id for p in net.processes)
            or sorted(trace.buffer_ids) != sorted(b.id for b in net.buffers)):
        print("energysched: trace columns do not match the scenario", file=sys.stderr)
        return STAGE_EXIT["parse"]
    final_buffers = [b.id for b in net.buffers if b.kind == FINAL]
    final_procs = [p.id for p in net.processes if p.destination in final_buffers]
    out = Path(args.out)
    hours = [str(h) for h in range(trace.n_steps)]
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "machine_activation.csv",
                  ["hour"] + [f"m{m}" for m in trace.machine_ids],
                  [[h] + [str(int(round(v))) for v in trace.delta[i]]
                   for i, h in enumerate(hours)])
        write_csv(out / "final_process_rates.csv", ["hour"] + [f"u_{j}" for j in final_procs],
                  [[h] + [fmt(trace.column("u", j)[i], 3) for j in final_procs]
                   for i, h in enumerate(hours)])
        write_csv(out / "final_buffer_levels.csv", ["hour"] + [f"x_{b}" for b in final_buffers],
                  [[h] + [fmt(trace.column("x", b)[i], 3) for b in final_buffers]
                   for i, h in enumerate(hours)])
        cum = {p: cumulative_production(trace, p) for p in trace.product_ids}
        write_csv(out / "cumulative_production.csv",
                  ["hour"] + [f"product_{p}" for p in trace.product_ids],
                  [[h] + [fmt(cum[p][i], 3) for p in trace.product_ids]
                   for i, h in enumerate(hours)])
    except OSError as exc:
        return _fail("io", str(exc))
    print(f"wrote plot data for {trace.n_steps} hours to {out}")
    return 0


# -- entry ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="energysched",
                                 description="Energy-aware production scheduling by MPC.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a production day under one or more tariffs")
    r.add_argument("--scenario", default="chicago-case",
                   help="scenario YAML file or bundled name (default: chicago-case)")
    r.add_argument("--tariff", action="extend", nargs="+", default=[],
                   help="tariff YAML file or bundled name; repeatable")
    r.add_argument("--out", default="runs", help="output directory (default: runs)")
    r.add_argument("--mip-gap", type=float, help="relative MIP gap per step")
    r.add_argument("--time-limit", type=float, help="seconds per step")
    r.add_argument("--seed", type=int, help="seed for a synthetic real-time price series")
    r.add_argument("--export-problems", action="store_true",
                   help="write every step's MIQP as an LP file")
    r.add_argument("--verbose", action="store_true", help="per-step and per-node solver log")
    r.add_argument("--eta-mode", choices=[SHRINKING, FIXED],
                   help="divide the in-horizon progress by the current (shrinking) or the "
                        "initial horizon length")
    for w in ("x", "u", "s", "e"):
        r.add_argument(f"--w-{w}", type=float, dest=f"w_{w}", help=f"objective weight w_{w}")
    r.add_argument("--jobs", type=int, default=1, help="tariffs simulated in parallel")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a scenario without solving")
    v.add_argument("scenario", help="scenario YAML file or bundled name")
    v.set_defaults(func=cmd_validate)

    p = sub.add_parser("plotdata", help="write chart-ready tables from a trace CSV")
    p.add_argument("trace", help="trace.csv written by 'run'")
    p.add_argument("--scenario", default="chicago-case",
                   help="scenario the trace came from (default: chicago-case)")
    p.add_argument("--out", help="output directory (default: <trace dir>/plot)")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "plotdata" and args.out is None:
        args.out = str(Path(args.trace).parent / "plot")
    if args.command != "run" or not getattr(args, "jobs", 1) > 1:
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                            else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
