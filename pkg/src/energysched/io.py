"""Reading plant scenarios and tariffs from YAML, writing traces and summaries."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ScenarioError, TariffError
from .formulation import MPCConfig
from .network import (
    FINAL,
    INTERMEDIATE,
    SOURCE,
    BufferSpec,
    ManufacturingNetwork,
    ProcessSpec,
    ProductSpec,
    build_network,
)
from .pricing import (
    CRITICAL_PEAK,
    REAL_TIME,
    TOU,
    CppEvent,
    DayContext,
    PricingProgram,
    TouWindow,
    synthetic_rtp_series,
)

BUNDLED_SCENARIOS = ("chicago-case",)
BUNDLED_TARIFFS = ("general", "critical_peak", "tou", "real_time")


class ParseError(ScenarioError):
    """Malformed file; the message names the file and the offending field."""


@dataclass
class Scenario:
    name: str
    network: ManufacturingNetwork
    day: DayContext = field(default_factory=DayContext)
    horizon: int = 24
    initial_x: np.ndarray | None = None
    config: MPCConfig = field(default_factory=MPCConfig)
    source: str | None = None


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("energysched").joinpath("data", *parts)))


def resolve_scenario(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    if str(name_or_path) in BUNDLED_SCENARIOS:
        return data_path(f"{name_or_path}.yaml")
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name_or_path!r}")


def resolve_tariff(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    if str(name_or_path) in BUNDLED_TARIFFS:
        return data_path("tariffs", f"{name_or_path}.yaml")
    raise FileNotFoundError(f"no tariff file or bundled tariff named {name_or_path!r}")


def _load_yaml(path: Path):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"{path}:{where} invalid YAML: {getattr(exc, 'problem', exc)}") from exc


def _get(entry: dict, key: str, ctx: str, cast=float, default=...):
    if not isinstance(entry, dict):
        raise ParseError(f"{ctx}: expected a mapping, got {type(entry).__name__}")
    if key not in entry:
        if default is ...:
            raise ParseError(f"{ctx}: missing field '{key}'")
        return default
    try:
        return cast(entry[key])
    except (TypeError, ValueError):
        raise ParseError(f"{ctx}.{key}: cannot interpret {entry[key]!r}") from None


def _origin(v):
    if isinstance(v, str) and v.upper() == SOURCE:
        return SOURCE
    return int(v)


def _section(doc, key, path):
    items = doc.get(key)
    if not isinstance(items, list) or not items:
        raise ParseError(f"{path}: section '{key}' must be a non-empty list")
    return items


def parse_scenario(doc: dict, path="<scenario>") -> Scenario:
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    buffers = []
    for i, e in enumerate(_section(doc, "buffers", path)):
        ctx = f"{path}: buffers[{i}]"
        kind = _get(e, "kind", ctx, str, INTERMEDIATE)
        if kind not in (INTERMEDIATE, FINAL):
            raise ParseError(f"{ctx}.kind: expected 'intermediate' or 'final', got {kind!r}")
        buffers.append(BufferSpec(id=_get(e, "id", ctx, int), x_min=_get(e, "min", ctx),
                                  x_max=_get(e, "max", ctx), kind=kind))
    processes = []
    for i, e in enumerate(_section(doc, "processes", path)):
        ctx = f"{path}: processes[{i}]"
        processes.append(ProcessSpec(
            id=_get(e, "id", ctx, int), origin=_get(e, "origin", ctx, _origin),
            destination=_get(e, "destination", ctx, int), machine=_get(e, "machine", ctx, int),
            u_min=_get(e, "u_min", ctx, float, 0.0), u_max=_get(e, "u_max", ctx),
            energy_intensity=_get(e, "epsilon", ctx),
        ))
    products = []
    for i, e in enumerate(_section(doc, "products", path)):
        ctx = f"{path}: products[{i}]"
        products.append(ProductSpec(id=_get(e, "id", ctx, int),
                                    final_buffer=_get(e, "final_buffer", ctx, int),
                                    goal=_get(e, "goal", ctx)))
    try:
        network = build_network(buffers, processes, products)
    except ScenarioError as exc:
        raise type(exc)(f"{path}: {exc}") from None

    day_doc = doc.get("day") or {}
    day = DayContext(date=None if day_doc.get("date") is None else str(day_doc["date"]),
                     weekday=bool(day_doc.get("weekday", True)))
    horizon = _get(doc, "horizon", str(path), int, 24)
    init = doc.get("initial_levels", 0)
    if isinstance(init, (int, float)):
        x0 = np.full(network.n_x, float(init))
    else:
        x0 = np.asarray(init, dtype=float)
        if x0.shape != (network.n_x,):
            raise ParseError(f"{path}: initial_levels needs {network.n_x} entries")
    mpc = dict(doc.get("mpc") or {})
    mpc.setdefault("H", horizon)
    mpc.setdefault("N", min(horizon, mpc.get("N", horizon)))
    if "big_M" in mpc and mpc["big_M"] is not None:
        mpc["big_M"] = tuple(float(v) for v in mpc["big_M"])
    try:
        config = MPCConfig(**mpc)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: mpc: {exc}") from None
    return Scenario(name=str(doc.get("name", Path(str(path)).stem)), network=network, day=day,
                    horizon=horizon, initial_x=x0, config=config, source=str(path))


def load_scenario(name_or_path) -> Scenario:
    path = resolve_scenario(name_or_path)
    return parse_scenario(_load_yaml(path), path)


def read_rtp_series(path) -> np.ndarray:
    """Plain text, one USD/kWh value per line; blank lines and ``#`` comments ignored."""
    values = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise TariffError(f"{path}: line {n}: not a number: {line!r}") from None
    if not values:
        raise TariffError(f"{path}: empty rate series")
    return np.array(values)


def _tier(value, path) -> str:
    if isinstance(value, bool):
        # unquoted off/on/yes/no are booleans in YAML
        raise TariffError(f"{path}: TOU tier {value!r} was read as a boolean; quote tier names")
    return str(value)


def parse_tariff(doc: dict, path="<tariff>", *, seed: int | None = None,
                 base_dir: Path | None = None) -> PricingProgram:
    if not isinstance(doc, dict):
        raise TariffError(f"{path}: top level must be a mapping")
    try:
        name = str(doc["program"])
        kw = dict(name=name, basic_charge=float(doc["basic_charge"]),
                  demand_rate=float(doc["demand_rate"]),
                  flat_rate=float(doc.get("flat_rate", 0.0)), label=doc.get("label"))
        if name == TOU:
            tou = doc["tou"]
            kw["tou_rates"] = {_tier(k, path): float(v) for k, v in tou["rates"].items()}
            kw["tou_windows"] = tuple(
                TouWindow(days=str(w.get("days", "all")), start=int(w["start"]),
                          end=int(w["end"]), tier=_tier(w["tier"], path))
                for w in tou["windows"])
        if name == CRITICAL_PEAK:
            cpp = doc["cpp"]
            kw["cpp_rate"] = float(cpp["rate"])
            kw["avoidance_credit"] = float(cpp.get("credit", 0.0))
            kw["cpp_events"] = tuple(
                CppEvent(date=str(e["date"]), start=int(e["start"]), end=int(e["end"]))
                for e in cpp.get("events", []))
        if name == REAL_TIME:
            src = doc.get("rtp_series")
            if src is None:
                kw["rtp_series"] = None
            elif isinstance(src, list):
                kw["rtp_series"] = np.asarray(src, dtype=float)
            elif str(src) == "synthetic":
                kw["rtp_series"] = synthetic_rtp_series(seed=2024 if seed is None else seed)
            else:
                p = Path(str(src))
                if not p.is_absolute() and base_dir is not None:
                    p = base_dir / p
                kw["rtp_series"] = read_rtp_series(p)
    except KeyError as exc:
        raise TariffError(f"{path}: missing field {exc}") from None
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, TariffError):
            raise
        raise TariffError(f"{path}: {exc}") from None
    try:
        return PricingProgram(**kw)
    except TariffError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def load_tariff(name_or_path, *, seed: int | None = None) -> PricingProgram:
    path = resolve_tariff(name_or_path)
    doc = _load_yaml(path)
    return parse_tariff(doc, path, seed=seed, base_dir=path.parent)


def fmt(v: float, decimals: int) -> str:
    """Fixed-decimal formatting without negative zero."""
    r = round(float(v), decimals) + 0.0
    return f"{r:.{decimals}f}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    return header, rows
