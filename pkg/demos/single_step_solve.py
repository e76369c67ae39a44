"""Build the first scheduling problem of the day and look inside its solution.

Shows the size of the mixed-integer problem, the branch-and-bound result,
the planned energy per hour and the LP file that external solvers can read.
"""
import tempfile
from pathlib import Path

import numpy as np

from energysched.formulation import HorizonState, build_problem, extract_solution, objective_terms
from energysched.io import load_scenario, load_tariff
from energysched.solver.bnb import solve_miqp
from energysched.solver.lpformat import export_problem, read_lp

scenario = load_scenario("chicago-case")
net = scenario.network
program = load_tariff("tou")
state = HorizonState.cold_start(net, scenario.initial_x)

problem = build_problem(net, program, scenario.config, state, scenario.day)
print(f"variables {problem.n_vars} ({problem.n_bin} binary), rows {problem.n_rows}")

sol = solve_miqp(problem, mip_gap=1e-3, time_limit=60)
print(f"status {sol.status}, objective {sol.objective:.4f}, gap {sol.rel_gap:.2e}, "
      f"nodes {sol.nodes}, {sol.solve_time:.2f} s")
for term, value in objective_terms(problem, sol.values).items():
    print(f"  {term:<9} {value:12.4f}")

plan = extract_solution(problem, sol.values)
energy = plan.u @ net.energy_intensity
print("planned kWh per hour:", np.round(energy, 1).tolist())
print("planned deliveries per product:", np.round(plan.d.sum(axis=0), 2).tolist())

with tempfile.TemporaryDirectory() as tmp:
    path = export_problem(problem, Path(tmp) / "step_00.lp")
    back = read_lp(path)
    print(f"LP file {path.stat().st_size} bytes; re-read {back.n_vars} variables, "
          f"{back.n_bin} binaries")
