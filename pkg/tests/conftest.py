"""Shared fixtures: the reference plant with its tariffs, plus one closed-loop day per tariff."""
import numpy as np
import pytest

from energysched.io import load_scenario, load_tariff
from energysched.network import (
    FINAL,
    INTERMEDIATE,
    SOURCE,
    BufferSpec,
    ProcessSpec,
    ProductSpec,
    build_network,
)
from energysched.pricing import PROGRAMS
from energysched.simulation import run_closed_loop

_TRACES = {}


@pytest.fixture(scope="session")
def scenario():
    return load_scenario("chicago-case")


@pytest.fixture(scope="session")
def network(scenario):
    return scenario.network


@pytest.fixture(scope="session")
def tariffs():
    return {name: load_tariff(name) for name in PROGRAMS}


def reference_trace(name):
    """Closed-loop day of the reference plant under a bundled tariff (computed once)."""
    if name not in _TRACES:
        sc = load_scenario("chicago-case")
        _TRACES[name] = run_closed_loop(sc.network, load_tariff(name), sc.config,
                                        sc.initial_x, sc.day)
    return _TRACES[name]


@pytest.fixture(scope="session")
def traces():
    return {name: reference_trace(name) for name in PROGRAMS}


@pytest.fixture
def chain_network():
    """SOURCE -> x1 -> x2 (final), two processes on one machine."""
    return build_network(
        [BufferSpec(1, 0, 10, INTERMEDIATE), BufferSpec(2, 0, 10, FINAL)],
        [ProcessSpec(1, SOURCE, 1, 1, 0, 5, 1.0), ProcessSpec(2, 1, 2, 1, 0, 5, 2.0)],
        [ProductSpec(1, 2, 0.0)],
    )


def random_network(rng, n_buffers=5, n_machines=3):
    """A random tree-shaped plant: every buffer is fed by one process."""
    buffers, processes = [], []
    finals = set()
    for i in range(1, n_buffers + 1):
        origin = SOURCE if i == 1 or rng.random() < 0.3 else int(rng.integers(1, i))
        processes.append(ProcessSpec(i, origin, i, int(rng.integers(1, n_machines + 1)),
                                     0.0, float(rng.uniform(1, 10)), float(rng.uniform(0, 1))))
    fed = {p.origin for p in processes}
    for i in range(1, n_buffers + 1):
        kind = INTERMEDIATE if i in fed else FINAL
        if kind == FINAL:
            finals.add(i)
        buffers.append(BufferSpec(i, 0.0, 20.0, kind))
    products = [ProductSpec(q + 1, b, 1.0) for q, b in enumerate(sorted(finals))]
    return build_network(buffers, processes, products)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
