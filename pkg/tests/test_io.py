import numpy as np
import pytest
import yaml

from energysched.errors import DanglingReference, TariffError
from energysched.io import (
    ParseError,
    fmt,
    load_scenario,
    load_tariff,
    parse_scenario,
    read_rtp_series,
)
from energysched.pricing import synthetic_rtp_series


def _doc():
    with open(load_scenario("chicago-case").source) as fh:
        return yaml.safe_load(fh)


def test_bundled_scenario(scenario):
    assert scenario.name == "chicago-case"
    assert scenario.day.date == "2024-07-16" and scenario.day.weekday
    assert scenario.horizon == 24
    np.testing.assert_array_equal(scenario.initial_x, np.zeros(11))
    cfg = scenario.config
    assert (cfg.N, cfg.H, cfg.w_x, cfg.w_u, cfg.w_s, cfg.w_e, cfg.tau, cfg.xi) == (
        24, 24, 1, 0.5, 1000, 500, 0.05, 0.5)
    np.testing.assert_array_equal(scenario.network.goals, [75, 30, 45])


def test_reference_parameters(network):
    net = network
    np.testing.assert_array_equal(net.x_max, [15] * 8 + [20] * 3)
    np.testing.assert_array_equal(net.u_max, [15, 15] + [10] * 10)
    eps = dict(zip([p.id for p in net.processes], net.energy_intensity))
    assert [eps[j] for j in (1, 2, 10, 11, 12)] == [0.5] * 5
    assert [eps[j] for j in range(3, 10)] == [0.25] * 7


def test_dangling_reference_names_the_field(tmp_path):
    doc = _doc()
    doc["processes"][3]["origin"] = 42
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(DanglingReference, match="42"):
        load_scenario(path)


def test_missing_field_has_path_context():
    doc = _doc()
    del doc["processes"][2]["u_max"]
    with pytest.raises(ParseError, match=r"processes\[2\].*u_max"):
        parse_scenario(doc)


def test_yaml_syntax_error_has_line(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("buffers:\n  - {id: 1\nprocesses: []\n")
    with pytest.raises(ParseError, match="line"):
        load_scenario(path)


def test_tariff_series_file_and_synthetic(tmp_path):
    (tmp_path / "rates.txt").write_text("# hourly\n" + "\n".join(["0.02"] * 24) + "\n")
    (tmp_path / "rt.yaml").write_text(
        "program: real_time\nbasic_charge: 1\ndemand_rate: 2\nrtp_series: rates.txt\n")
    prog = load_tariff(tmp_path / "rt.yaml")
    np.testing.assert_array_equal(prog.rtp_series, np.full(24, 0.02))
    (tmp_path / "syn.yaml").write_text(
        "program: real_time\nbasic_charge: 1\ndemand_rate: 2\nrtp_series: synthetic\n")
    np.testing.assert_array_equal(load_tariff(tmp_path / "syn.yaml", seed=5).rtp_series,
                                  synthetic_rtp_series(seed=5))


def test_tariff_errors(tmp_path):
    (tmp_path / "t.yaml").write_text("program: general\nbasic_charge: 1\n")
    with pytest.raises(TariffError, match="demand_rate"):
        load_tariff(tmp_path / "t.yaml")
    (tmp_path / "r.txt").write_text("0.1\nabc\n")
    with pytest.raises(TariffError, match="line 2"):
        read_rtp_series(tmp_path / "r.txt")
    (tmp_path / "tou.yaml").write_text(
        "program: tou\nbasic_charge: 1\ndemand_rate: 1\n"
        "tou: {rates: {off: 0.1}, windows: [{start: 0, end: 24, tier: off}]}\n")
    with pytest.raises(TariffError, match="boolean"):
        load_tariff(tmp_path / "tou.yaml")
    with pytest.raises(FileNotFoundError):
        load_tariff("no-such-tariff")


def test_fmt_has_no_negative_zero():
    assert fmt(-1e-12, 3) == "0.000"
    assert fmt(-0.0004, 3) == "0.000"
    assert fmt(2.0005, 5) == "2.00050"
