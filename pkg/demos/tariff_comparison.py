"""Simulate the bundled plant for one day under each bundled tariff and compare bills.

Run with ``python3 demos/tariff_comparison.py``. Takes well under a minute.
"""
from energysched.accounting import reduction_percent, settle
from energysched.io import load_scenario, load_tariff
from energysched.pricing import PROGRAMS
from energysched.simulation import cumulative_production, run_closed_loop

scenario = load_scenario("chicago-case")
net = scenario.network
print(f"{scenario.name}: {net.n_x} buffers, {net.n_u} processes, {net.n_m} machines, "
      f"goals {net.goals.tolist()}")

costs = {}
for name in PROGRAMS:
    program = load_tariff(name)
    trace = run_closed_loop(net, program, scenario.config, scenario.initial_x, scenario.day)
    costs[name] = settle(trace, program)
    produced = [round(float(cumulative_production(trace, p.id)[-1]), 2) for p in net.products]
    # hourly energy profile as a bar of '#' characters, one per kWh
    print(f"\n{program.display_name}: {trace.total_energy:.1f} kWh, produced {produced}")
    for h, e in enumerate(trace.energy):
        print(f"  {h:2d}h {trace.price[h]:.4f} USD/kWh {e:6.2f} kWh {'#' * int(round(e))}")

print(f"\n{'program':<13}{'basic':>8}{'demand':>9}{'usage':>8}{'total':>9}{'peak kW':>9}")
for c in costs.values():
    print(f"{c.program:<13}{c.basic:8.2f}{c.demand:9.2f}{c.usage:8.2f}{c.total:9.2f}"
          f"{c.peak_power:9.2f}")

base = costs["general"].usage
for name in PROGRAMS[1:]:
    print(f"usage reduction under {costs[name].program}: "
          f"{reduction_percent(base, costs[name].usage):.1f}%")
