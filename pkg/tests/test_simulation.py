import numpy as np
import pytest

from energysched.errors import BoundViolation, DimensionMismatch, UnknownProduct
from energysched.formulation import MPCConfig
from energysched.pricing import PROGRAMS
from energysched.simulation import (
    ScheduleTrace,
    TraceFormatError,
    cumulative_production,
    read_trace_csv,
    run_closed_loop,
    trace_header,
    write_trace_csv,
)

from .audits import audit_trace

CPP_WINDOW = [13, 14, 15, 16]


def test_zero_goals_give_zero_trace(chain_network, tariffs):
    tr = run_closed_loop(chain_network, tariffs["general"], MPCConfig(N=4, H=4))
    assert tr.n_steps == 4
    assert tr.total_energy == 0.0
    for arr in (tr.u, tr.d, tr.x, tr.delta, tr.s):
        assert np.all(arr == 0.0)
    np.testing.assert_array_equal(cumulative_production(tr, 1), np.zeros(4))


def test_reference_general_energy(traces):
    assert traces["general"].total_energy == pytest.approx(225.0, abs=0.5)


def test_cpp_event_window_empty(traces, network):
    tr = traces["critical_peak"]
    eps = 1e-3 * network.energy_intensity.sum()
    assert np.all(tr.energy[CPP_WINDOW] <= eps)
    assert np.all(tr.delta[CPP_WINDOW] == 0)


@pytest.mark.parametrize("name", PROGRAMS)
def test_goals_met(traces, network, name):
    tr = traces[name]
    for p in network.products:
        final = cumulative_production(tr, p.id)[-1]
        assert abs(final - p.goal) <= tr.alpha[-1] * p.goal + 1e-6


@pytest.mark.parametrize("name", PROGRAMS)
def test_trace_audit(traces, network, name):
    tr = traces[name]
    assert tr.n_steps == 24 and tr.x.shape == (24, 11) and tr.delta.shape == (24, 8)
    assert audit_trace(tr, network) == dict(bounds=0, outflow=0, delivery=0, coupling=0,
                                            replay=0, energy=0)
    for p in network.products:
        assert np.all(np.diff(cumulative_production(tr, p.id)) >= 0)


def test_cumulative_production_small():
    tr = ScheduleTrace([1], [1], [1, 2, 3], [1], np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1)),
                       np.array([[1.0, 2.0, 3.0]]), np.zeros((1, 1)), np.zeros((1, 3)),
                       np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1, int),
                       np.zeros(1))
    assert [cumulative_production(tr, p)[-1] for p in (1, 2, 3)] == [1.0, 2.0, 3.0]
    with pytest.raises(UnknownProduct):
        cumulative_production(tr, 9)


def test_csv_round_trip(traces, tmp_path):
    tr = traces["tou"]
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == trace_header(tr)
    assert header[:3] == ["hour", "price_usd_per_kwh", "energy_kwh"]
    back = read_trace_csv(path)
    np.testing.assert_allclose(back.u, tr.u, atol=5e-4)
    np.testing.assert_allclose(back.x, tr.x, atol=5e-4)
    np.testing.assert_allclose(back.energy, tr.energy, atol=5e-4)
    np.testing.assert_array_equal(back.delta, tr.delta)
    np.testing.assert_array_equal(back.nodes, tr.nodes)
    write_trace_csv(back, tmp_path / "again.csv")
    a = path.read_text().splitlines()
    b = (tmp_path / "again.csv").read_text().splitlines()
    assert [r.rsplit(",", 1)[0] for r in a] == [r.rsplit(",", 1)[0] for r in b]


def test_malformed_trace(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(TraceFormatError):
        read_trace_csv(bad)


def test_bad_initial_levels(network, tariffs):
    with pytest.raises(DimensionMismatch):
        run_closed_loop(network, tariffs["general"], MPCConfig(), np.zeros(3))
    with pytest.raises(BoundViolation):
        run_closed_loop(network, tariffs["general"], MPCConfig(), np.full(11, -1.0))


def test_lp_export_per_step(chain_network, tariffs, tmp_path):
    run_closed_loop(chain_network, tariffs["general"], MPCConfig(N=3, H=3), export_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["step_00.lp", "step_01.lp",
                                                         "step_02.lp"]
