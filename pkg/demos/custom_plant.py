"""Describe a small plant in code and schedule it against a time-of-use tariff.

A cutting step feeds two finishing processes that share one machine, so
they can only switch on together. The controller has to finish four units
of one product and two of the other by the end of an eight-hour shift.
"""
from energysched.accounting import settle
from energysched.formulation import MPCConfig
from energysched.io import load_tariff
from energysched.network import (
    FINAL,
    INTERMEDIATE,
    SOURCE,
    BufferSpec,
    ProcessSpec,
    ProductSpec,
    build_network,
    coupled_group_ids,
)
from energysched.pricing import PricingProgram, TouWindow
from energysched.simulation import run_closed_loop

net = build_network(
    [BufferSpec(1, 0, 10, INTERMEDIATE), BufferSpec(2, 0, 10, FINAL),
     BufferSpec(3, 0, 10, FINAL)],
    [ProcessSpec(1, SOURCE, 1, machine=1, u_min=0, u_max=3, energy_intensity=0.4),
     ProcessSpec(2, 1, 2, machine=2, u_min=0, u_max=3, energy_intensity=0.3),
     ProcessSpec(3, 1, 3, machine=2, u_min=0, u_max=3, energy_intensity=0.3)],
    [ProductSpec(1, final_buffer=2, goal=4.0), ProductSpec(2, final_buffer=3, goal=2.0)],
)
print("coupled groups:", coupled_group_ids(net))

tou = PricingProgram(
    "tou", basic_charge=100.0, demand_rate=5.0,
    tou_rates={"peak": 0.20, "off": 0.05},
    tou_windows=(TouWindow("all", 3, 6, "peak"), TouWindow("all", 6, 3, "off")),
)
config = MPCConfig(N=8, H=8)
for program in (load_tariff("general"), tou):
    trace = run_closed_loop(net, program, config)
    cost = settle(trace, program)
    print(f"\n{program.display_name}: usage {cost.usage:.4f} USD, peak {cost.peak_power:.2f} kW")
    for h in range(trace.n_steps):
        print(f"  hour {h}: price {trace.price[h]:.2f}  energy {trace.energy[h]:.2f} kWh  "
              f"rates {trace.u[h].round(2).tolist()}")
