import numpy as np
import pytest

from gridoutage.errors import SamplingError
from gridoutage.network import (
    Network,
    measurement_matrix,
    susceptance_matrix,
)
from gridoutage.scenarios import (
    Scenario,
    bad_data_indicator,
    balanced_injections,
    inject_bad_data,
    make_scenario,
    outage_delta_b,
    outage_indicator,
    read_scenarios,
    sample_faulty_buses,
    sample_outage,
    simulate_event,
    trial_rng,
    true_decomposition,
    write_scenarios,
)


def test_sample_outage_zero():
    rng = np.random.default_rng(0)
    net = Network(bus_ids=(1, 2), lines=((1, 2, 0.1),), p=np.zeros(2))
    assert sample_outage(net, 0, rng) == ()


def test_sample_outage_all_bridges_errors():
    # a path graph has only bridges: every single-line removal splits it
    net = Network(
        bus_ids=(1, 2, 3), lines=((1, 2, 0.1), (2, 3, 0.1)), p=np.zeros(3)
    )
    with pytest.raises(SamplingError):
        sample_outage(net, 1, np.random.default_rng(0))


def test_sample_outage_keeps_connected(net118):
    rng = np.random.default_rng(5)
    for _ in range(200):
        picked = sample_outage(net118, 2, rng)
        assert len(picked) == 2
        assert net118.is_connected(
            removed_lines=[net118.line_index(l) for l in picked]
        )


def test_simulate_event_no_outage_no_noise(sixbus):
    theta, theta_post, eta = simulate_event(sixbus, (), 0.0, np.random.default_rng(0))
    assert np.array_equal(theta, theta_post)
    assert np.all(eta == 0)


def test_simulate_event_post_flow_residual(sixbus):
    # outage of line 5 keeps the six-bus ring connected
    theta, theta_post, eta = simulate_event(sixbus, (5,), 0.0, np.random.default_rng(0))
    b_post = susceptance_matrix(sixbus) - outage_delta_b(sixbus, (5,))
    p = balanced_injections(sixbus)
    resid = b_post @ theta_post - p
    keep = np.arange(6) != sixbus.slack
    assert np.abs(resid[keep]).max() < 1e-10


def test_noise_std_matches_target(net118):
    rng = np.random.default_rng(11)
    p = balanced_injections(net118)
    target = 0.03 * np.mean(np.abs(p))
    draws = []
    for _ in range(200):
        _, _, eta = simulate_event(net118, (), 0.03, rng)
        draws.append(eta)
    std = np.std(np.concatenate(draws))
    assert abs(std - target) / target < 0.05


def test_inject_bad_data_bounds(sixbus):
    rng = np.random.default_rng(3)
    theta, theta_post, _ = simulate_event(sixbus, (), 0.0, rng)
    theta_bar = np.mean(np.abs(theta))
    corrupt = inject_bad_data(theta_post, (1,), theta, sixbus, rng)
    diff = corrupt - theta_post
    assert np.count_nonzero(diff) == 1
    assert abs(diff[sixbus.bus_index(1)]) <= theta_bar


def test_inject_bad_data_empty_and_degenerate(sixbus):
    rng = np.random.default_rng(3)
    theta_post = np.arange(6.0)
    assert np.array_equal(
        inject_bad_data(theta_post, (), np.ones(6), sixbus, rng), theta_post
    )
    # zero pre-event angles give zero corruption scale
    corrupt = inject_bad_data(theta_post, (2,), np.zeros(6), sixbus, rng)
    assert np.array_equal(corrupt, theta_post)


def test_outage_only_identity(sixbus):
    # without bad data the observation equals the outage-response image
    sc = make_scenario(sixbus, 2, 0, noise_std_frac=0.0, seed=8)
    b = susceptance_matrix(sixbus)
    y = b @ (sc.theta_corrupt - sc.theta_pre)
    a = measurement_matrix(sixbus, sc.theta_post)
    s_o = outage_indicator(sixbus, sc.outage_lines)
    assert np.abs(y - a @ s_o).max() < 1e-9


@pytest.mark.parametrize("placement", ["involved", "separated"])
def test_decomposition_identity(case14, placement):
    # with bad data: y = A s + e (+ noise) for the union indicator s
    for seed in range(25):
        sc = make_scenario(
            case14, 2, 1, placement=placement, noise_std_frac=0.0, seed=seed
        )
        b = susceptance_matrix(case14)
        y = b @ (sc.theta_corrupt - sc.theta_pre)
        s, e = true_decomposition(case14, sc)
        a = measurement_matrix(case14, sc.theta_corrupt)
        assert np.abs(y - (a @ s + e)).max() < 1e-9


def test_footnote_outage_orthogonal_to_separated_bad_data(case14):
    # when no outage line touches a faulty bus, the outage susceptance
    # change annihilates the corruption vector
    sc = make_scenario(case14, 2, 1, placement="separated", noise_std_frac=0.0, seed=4)
    delta_b = outage_delta_b(case14, sc.outage_lines)
    theta_b = sc.theta_corrupt - sc.theta_post
    assert np.abs(delta_b @ theta_b).max() < 1e-12


def test_involved_placement_touches_outage(net118):
    rng = np.random.default_rng(2)
    for _ in range(20):
        outages = sample_outage(net118, 3, rng)
        faulty = sample_faulty_buses(net118, 1, outages, "involved", rng)
        endpoints = set()
        for lid in outages:
            l = net118.line_index(lid)
            endpoints.add(net118.bus_id(int(net118.from_idx[l])))
            endpoints.add(net118.bus_id(int(net118.to_idx[l])))
        assert set(faulty) & endpoints


def test_separated_placement_avoids_neighbourhood(net118):
    rng = np.random.default_rng(2)
    for _ in range(20):
        outages = sample_outage(net118, 3, rng)
        faulty = sample_faulty_buses(net118, 2, outages, "separated", rng)
        s_b = bad_data_indicator(net118, faulty)
        endpoints = set()
        for lid in outages:
            l = net118.line_index(lid)
            endpoints.add(int(net118.from_idx[l]))
            endpoints.add(int(net118.to_idx[l]))
        # no corrupted line reaches an outage endpoint
        for l in np.flatnonzero(s_b):
            assert int(net118.from_idx[l]) not in endpoints
            assert int(net118.to_idx[l]) not in endpoints


def test_scenario_replay_deterministic(sixbus):
    a = make_scenario(sixbus, 1, 1, noise_std_frac=0.01, seed=99)
    b = make_scenario(sixbus, 1, 1, noise_std_frac=0.01, seed=99)
    assert a.outage_lines == b.outage_lines
    assert a.faulty_buses == b.faulty_buses
    assert np.array_equal(a.theta_corrupt, b.theta_corrupt)


def test_trial_rng_substreams_differ():
    x = trial_rng(7, 0).random()
    y = trial_rng(7, 1).random()
    z = trial_rng(7, 0).random()
    assert x != y
    assert x == z


def test_jsonl_round_trip(tmp_path, sixbus):
    scenarios = [
        make_scenario(sixbus, 1, 1, noise_std_frac=0.01, seed=s) for s in range(3)
    ]
    path = tmp_path / "scenarios.jsonl"
    write_scenarios(path, scenarios)
    back = read_scenarios(path)
    assert len(back) == 3
    for orig, copy in zip(scenarios, back):
        assert copy.outage_lines == tuple(orig.outage_lines)
        assert copy.faulty_buses == tuple(orig.faulty_buses)
        # angles survive with full precision
        assert np.array_equal(copy.theta_corrupt, orig.theta_corrupt)
        assert copy.noise_std == orig.noise_std
