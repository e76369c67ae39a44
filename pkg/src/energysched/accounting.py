"""Electricity bill for a simulated day.

The bill has three parts. The basic charge is a monthly fee prorated to the
simulated hours over a 30-day month. The demand charge applies the full
monthly rate to the day's peak hourly power. The usage charge prices every
hour's energy at the rate in force, less the avoidance credit when a
critical-peak event passes without consumption.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import IncompleteTrace
from .pricing import CRITICAL_PEAK, PricingProgram, energy_rate, event_hours
from .simulation import ScheduleTrace

DAYS_PER_MONTH = 30
STEP_HOURS = 1.0
# event-window energy at or below this counts as full avoidance (kWh)
AVOIDANCE_TOL = 1e-6


@dataclass
class CostBreakdown:
    program: str
    basic: float
    demand: float
    peak_power: float
    usage: float
    total: float
    cpp_credit_applied: bool = False
    energy_total: float = 0.0
    usage_before_credit: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def settle(trace: ScheduleTrace, program: PricingProgram) -> CostBreakdown:
    """Price a complete trace under ``program``."""
    H = trace.horizon
    if trace.n_steps != H or H == 0:
        raise IncompleteTrace(f"trace has {trace.n_steps} of {H} hours")
    energy = np.asarray(trace.energy, dtype=float)
    rates = np.array([energy_rate(program, h, trace.day) for h in range(H)])
    basic = program.basic_charge / DAYS_PER_MONTH * (H * STEP_HOURS / 24.0)
    peak = float(np.max(energy / STEP_HOURS)) if H else 0.0
    peak = max(peak, 0.0)
    demand = program.demand_rate * peak
    gross = float(rates @ energy)
    credit = False
    if program.name == CRITICAL_PEAK:
        hours = event_hours(program, trace.day, H)
        if hours and trace.energy_in(hours) <= AVOIDANCE_TOL:
            credit = True
    usage = gross - (program.avoidance_credit if credit else 0.0)
    return CostBreakdown(program=program.display_name, basic=basic, demand=demand,
                         peak_power=peak, usage=usage, total=basic + demand + usage,
                         cpp_credit_applied=credit, energy_total=float(energy.sum()),
                         usage_before_credit=gross)


def reduction_percent(reference: float, value: float) -> float:
    """Percentage saved by ``value`` relative to ``reference``."""
    if reference == 0:
        raise ZeroDivisionError("reference cost is zero")
    return 100.0 * (reference - value) / reference


def flat_usage(trace: ScheduleTrace, rate: float) -> float:
    """Usage charge of the realized schedule at a single flat rate."""
    return float(rate * np.sum(trace.energy))
