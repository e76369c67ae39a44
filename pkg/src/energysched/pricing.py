"""Industrial electricity pricing programs.

Four program shapes are supported: a flat ``general`` rate, ``critical_peak``
(flat rate plus declared event windows at a very high rate, with a daily credit
for staying off during events), ``tou`` (fixed daily tiers) and ``real_time``
(an hourly series). Every program also carries a monthly basic charge and a
demand rate, which only matter for settlement.

Time is measured in whole hours from midnight of the simulated day.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import HourOutOfRange, MissingRtpSeries, TariffError

GENERAL = "general"
CRITICAL_PEAK = "critical_peak"
TOU = "tou"
REAL_TIME = "real_time"
PROGRAMS = (GENERAL, CRITICAL_PEAK, TOU, REAL_TIME)

WEEKDAY = "weekday"
WEEKEND = "weekend"
ALL_DAYS = "all"
TIERS = ("peak", "mid", "off")

DISPLAY_NAMES = {
    GENERAL: "General",
    CRITICAL_PEAK: "CriticalPeak",
    TOU: "TOU",
    REAL_TIME: "RealTime",
}


@dataclass(frozen=True)
class TouWindow:
    """Hours ``[start, end)`` of a tier; ``end < start`` wraps past midnight."""

    days: str
    start: int
    end: int
    tier: str

    def hours(self) -> list[int]:
        if self.end > self.start:
            return list(range(self.start, self.end))
        return list(range(self.start, 24)) + list(range(0, self.end))

    def applies_to(self, day_type: str) -> bool:
        return self.days == ALL_DAYS or self.days == day_type


@dataclass(frozen=True)
class CppEvent:
    date: str
    start: int
    end: int

    def covers(self, hour: int) -> bool:
        return self.start <= hour < self.end


@dataclass(frozen=True)
class DayContext:
    """What the tariff needs to know about the simulated day."""

    date: str | None = None
    weekday: bool = True

    @property
    def day_type(self) -> str:
        return WEEKDAY if self.weekday else WEEKEND


@dataclass(frozen=True, eq=False)
class PricingProgram:
    name: str
    basic_charge: float
    demand_rate: float
    flat_rate: float = 0.0
    tou_rates: dict = field(default_factory=dict)
    tou_windows: tuple[TouWindow, ...] = ()
    cpp_rate: float = 0.0
    avoidance_credit: float = 0.0
    cpp_events: tuple[CppEvent, ...] = ()
    rtp_series: np.ndarray | None = None
    label: str | None = None

    def __post_init__(self):
        if self.name not in PROGRAMS:
            raise TariffError(f"unknown pricing program {self.name!r}")
        rates = [self.basic_charge, self.demand_rate, self.flat_rate, self.cpp_rate,
                 self.avoidance_credit, *self.tou_rates.values()]
        if any(r < 0 for r in rates):
            raise TariffError(f"{self.name}: rates must be non-negative")
        if self.rtp_series is not None:
            series = np.asarray(self.rtp_series, dtype=float)
            if series.ndim != 1 or np.any(series < 0) or not np.all(np.isfinite(series)):
                raise TariffError("real-time series must be a finite non-negative 1-D sequence")
            object.__setattr__(self, "rtp_series", series)
        if self.name == TOU:
            _check_tou_partition(self.tou_windows, self.tou_rates)
        if self.name == REAL_TIME and self.rtp_series is None:
            raise MissingRtpSeries("real_time program requires an hourly rate series")

    @property
    def display_name(self) -> str:
        return self.label or DISPLAY_NAMES[self.name]

    def event_window(self, day: DayContext) -> CppEvent | None:
        """The critical-peak event on ``day``, if any."""
        if self.name != CRITICAL_PEAK or day.date is None:
            return None
        for ev in self.cpp_events:
            if ev.date == day.date:
                return ev
        return None

    def tier(self, hour: int, day: DayContext) -> str:
        for w in self.tou_windows:
            if w.applies_to(day.day_type) and hour in w.hours():
                return w.tier
        raise TariffError(f"no TOU tier covers hour {hour} on a {day.day_type}")


def _check_tou_partition(windows: Sequence[TouWindow], rates: dict) -> None:
    for w in windows:
        if w.tier not in TIERS:
            raise TariffError(f"unknown TOU tier {w.tier!r}")
        if w.tier not in rates:
            raise TariffError(f"no rate given for TOU tier {w.tier!r}")
        if w.days not in (WEEKDAY, WEEKEND, ALL_DAYS):
            raise TariffError(f"unknown day type {w.days!r}")
        if not (0 <= w.start < 24 and 0 <= w.end <= 24) or w.start == w.end:
            raise TariffError(f"bad TOU window {w.start}-{w.end}")
    for day_type in (WEEKDAY, WEEKEND):
        count = np.zeros(24, dtype=int)
        for w in windows:
            if w.applies_to(day_type):
                count[w.hours()] += 1
        if np.any(count != 1):
            bad = np.flatnonzero(count != 1).tolist()
            raise TariffError(f"TOU windows do not partition the {day_type} day (hours {bad})")


def energy_rate(program: PricingProgram, k: int, day: DayContext = DayContext()) -> float:
    """Energy rate (USD/kWh) in force during hour ``k`` of the simulated day."""
    k = int(k)
    if program.name == REAL_TIME:
        if program.rtp_series is None:
            raise MissingRtpSeries("real_time program has no rate series")
        if not 0 <= k < len(program.rtp_series):
            raise HourOutOfRange(f"hour {k} outside the {len(program.rtp_series)}-hour series")
        return float(program.rtp_series[k])
    if not 0 <= k < 24:
        raise HourOutOfRange(f"hour {k} outside [0, 24)")
    if program.name == GENERAL:
        return program.flat_rate
    if program.name == CRITICAL_PEAK:
        ev = program.event_window(day)
        if ev is not None and ev.covers(k):
            return program.cpp_rate
        return program.flat_rate
    return float(program.tou_rates[program.tier(k, day)])


def rate_vector(
    program: PricingProgram, start_hour: int, horizon_length: int, day: DayContext = DayContext()
) -> np.ndarray:
    if horizon_length < 1:
        raise ValueError("horizon_length must be >= 1")
    return np.array(
        [energy_rate(program, start_hour + t, day) for t in range(horizon_length)], dtype=float
    )


def event_hours(program: PricingProgram, day: DayContext, horizon: int = 24) -> list[int]:
    """Hours of ``day`` inside a critical-peak event (empty for other programs)."""
    ev = program.event_window(day)
    if ev is None:
        return []
    return [h for h in range(horizon) if ev.covers(h)]


def synthetic_rtp_series(hours: int = 24, mean: float = 0.031, noise: float = 0.0015,
                         seed: int | None = 2024) -> np.ndarray:
    """Diurnal stand-in for hourly wholesale prices.

    Cheap overnight with a peak in the late afternoon (around 17:00). The profile is rescaled to
    the requested mean after seeded Gaussian jitter is added, and rounded to
    five decimals so it can be written to and read back from text exactly.
    """
    h = np.arange(hours) % 24
    shape = (
        1.0
        + 0.45 * np.exp(-0.5 * ((h - 17.0) / 2.2) ** 2)
        + 0.12 * np.exp(-0.5 * ((h - 10.0) / 2.5) ** 2)
        - 0.35 * np.exp(-0.5 * ((h - 3.5) / 2.5) ** 2)
    )
    rng = np.random.default_rng(seed)
    series = shape + rng.normal(0.0, noise / mean, size=hours)
    series = np.clip(series, 0.2, None)
    series *= mean / series.mean()
    return np.round(series, 5)
