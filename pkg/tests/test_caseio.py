import numpy as np
import pytest

from gridoutage.caseio import load_case, parse_case, serialize_native
from gridoutage.errors import CaseParseError

MINIMAL_MATPOWER = """\
function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 20 0 0 0 1 1 0 138 1 1.06 0.94;
    2 1 30 0 0 0 1 1 0 138 1 1.06 0.94; % trailing comment
    5 1  0 0 0 0 1 1 0 138 1 1.06 0.94;
];
mpc.gen = [
    1 60 0 300 -300 1 100 1 100 0;
];
mpc.branch = [
    1 2 0.01 0.2  0 0 0 0 0 0 1 -360 360;
    2 5 0.01 0.2  0 0 0 0 0 0 1 -360 360;
    1 5 0.01 0.4  0 0 0 0 0 0 0 -360 360;
];
"""


def test_parse_matpower_minimal():
    net = parse_case(MINIMAL_MATPOWER, "matpower")
    assert net.n_buses == 3 and net.n_lines == 2
    assert net.bus_ids == (1, 2, 5)          # non-consecutive ids allowed
    assert net.slack == 0                    # type-3 bus
    assert np.allclose(net.p, [0.4, -0.3, 0.0])
    # the out-of-service 1-5 branch was dropped
    assert all((f, t) != (1, 5) for f, t, _ in net.lines)


def test_parallel_branch_merge():
    text = """
    {"base_mva": 1.0,
     "buses": [{"id": 1, "pd": 0}, {"id": 2, "pd": 1}],
     "gens": [{"bus": 1, "pg": 1}],
     "branches": [{"from": 1, "to": 2, "x": 0.2},
                  {"from": 2, "to": 1, "x": 0.2}]}
    """
    net = parse_case(text, "native")
    assert net.n_lines == 1
    assert abs(net.lines[0][2] - 0.1) < 1e-15


def test_sixbus_case_shape(sixbus):
    assert sixbus.n_buses == 6 and sixbus.n_lines == 7
    pairs = [(f, t) for f, t, _ in sixbus.lines]
    assert pairs == [(1, 2), (2, 3), (1, 3), (3, 4), (4, 5), (4, 6), (5, 6)]
    assert np.all(sixbus.x == 0.1)


def test_unknown_bus_raises_with_line_number():
    bad = MINIMAL_MATPOWER.replace("2 5 0.01 0.2", "2 99 0.01 0.2")
    with pytest.raises(CaseParseError, match="line 1[0-9]"):
        parse_case(bad, "matpower")


def test_nonpositive_reactance_raises():
    bad = MINIMAL_MATPOWER.replace("1 2 0.01 0.2", "1 2 0.01 -0.2")
    with pytest.raises(ValueError, match="reactance"):
        parse_case(bad, "matpower")


def test_malformed_row_raises():
    bad = MINIMAL_MATPOWER.replace("mpc.baseMVA = 100;", "mpc.baseMVA = 100;\nmpc.bus2 = [];")
    net = parse_case(bad, "matpower")  # unrelated fields are ignored
    assert net.n_buses == 3
    with pytest.raises(CaseParseError):
        parse_case(MINIMAL_MATPOWER.replace("0.2 ", "abc "), "matpower")


def test_missing_basemva_raises():
    with pytest.raises(CaseParseError, match="baseMVA"):
        parse_case("mpc.bus = [1 3 0];", "matpower")


def test_native_round_trip(sixbus):
    text = serialize_native(sixbus)
    again = parse_case(text, "native")
    assert again.bus_ids == sixbus.bus_ids
    assert again.lines == sixbus.lines
    assert np.array_equal(again.p, sixbus.p)
    assert again.slack == sixbus.slack
    # a second round trip is bit-identical
    assert serialize_native(again) == text


def test_case14_shape(case14):
    assert case14.n_buses == 14 and case14.n_lines == 20
    assert case14.bus_id(case14.slack) == 1
    # generation exceeds load at bus 1, load-only at bus 3
    assert case14.p[case14.bus_index(1)] > 2.0
    assert case14.p[case14.bus_index(3)] < -0.9


def test_synth_cases_parse(net118, cases_dir):
    assert net118.n_buses == 118 and net118.n_lines == 179
    net300 = load_case(cases_dir / "synth300.m")
    assert net300.n_buses == 300 and net300.n_lines == 409
