import itertools

import numpy as np
import pytest

from gridoutage.baselines import (
    exhaustive_search,
    identification_rates,
    lasso_kkt_violation,
    lasso_solve,
)
from gridoutage.identify import build_observation
from gridoutage.network import measurement_matrix, susceptance_matrix
from gridoutage.scenarios import make_scenario


def scenario_problem(net, k, seed, noise=0.0):
    sc = make_scenario(net, k, 0, noise_std_frac=noise, seed=seed)
    b = susceptance_matrix(net)
    y = build_observation(b, sc.theta_pre, sc.theta_corrupt)
    a = measurement_matrix(net, sc.theta_corrupt)
    return sc, a, y


def test_single_outage_exact(sixbus):
    sc, a, y = scenario_problem(sixbus, 1, seed=1)
    got = exhaustive_search(a, y, 1)
    assert got == sc.outage_lines
    s = np.zeros(7)
    s[got[0] - 1] = 1.0
    resid = y - a @ s
    assert float(resid @ resid) <= 1e-18


def test_pairs_match_brute_force(sixbus):
    # double-computation oracle: direct enumeration over all C(7,2) pairs
    for seed in range(10):
        sc, a, y = scenario_problem(sixbus, 2, seed=seed, noise=0.01)
        got = exhaustive_search(a, y, 2)
        dense = a.toarray()
        best, best_obj = None, np.inf
        for pair in itertools.combinations(range(7), 2):
            s = np.zeros(7)
            s[list(pair)] = 1.0
            obj = float(np.sum((y - dense @ s) ** 2))
            if obj < best_obj:
                best, best_obj = pair, obj
        assert got == (best[0] + 1, best[1] + 1)


def test_search_cap_refused(sixbus):
    _, a, y = scenario_problem(sixbus, 1, seed=0)
    with pytest.raises(ValueError, match="refused"):
        exhaustive_search(a, y, 3)
    assert exhaustive_search(a, y, 0) == ()


def test_lasso_large_penalty_gives_zero(sixbus):
    _, a, y = scenario_problem(sixbus, 2, seed=3)
    lam = 2.0 * float(np.abs(a.toarray().T @ y).max()) + 1.0
    lam_e = 2.0 * float(np.abs(y).max()) + 1.0
    s, e, converged = lasso_solve(a, y, lam, lam_e)
    assert converged
    assert not s.any() and not e.any()


def test_lasso_objective_nonincreasing(sixbus):
    _, a, y = scenario_problem(sixbus, 2, seed=4, noise=0.01)
    dense = a.toarray()
    lam_s, lam_e = 0.05, 0.05

    def objective(s, e):
        r = y - dense @ s - e
        return float(r @ r) + lam_s * np.abs(s).sum() + lam_e * np.abs(e).sum()

    prev = objective(np.zeros(7), np.zeros(6))
    for iters in [1, 2, 5, 10, 40]:
        s, e, _ = lasso_solve(a, y, lam_s, lam_e, max_iter=iters)
        now = objective(s, e)
        assert now <= prev + 1e-12
        prev = now


def test_lasso_kkt_conditions(net118):
    _, a, y = scenario_problem(net118, 2, seed=5, noise=0.01)
    lam_s = 0.1 * float(np.abs(a.toarray().T @ y).max())
    lam_e = 0.5 * float(np.abs(y).max())
    s, e, converged = lasso_solve(a, y, lam_s, lam_e, max_iter=3000, tol=1e-12)
    assert converged
    scale = max(1.0, float(np.abs(y).max()))
    assert lasso_kkt_violation(a, y, s, e, lam_s, lam_e) <= 1e-6 * scale


def test_lasso_known_count_recovery(sixbus):
    hits = 0
    for seed in range(10):
        sc, a, y = scenario_problem(sixbus, 1, seed=seed)
        lam_s = 0.02 * float(np.abs(a.toarray().T @ y).max())
        s, _, _ = lasso_solve(a, y, lam_s, np.inf)
        hits += int(np.argmax(s)) + 1 == sc.outage_lines[0]
    assert hits >= 9


def pair(rates):
    return rates.kappa_i, rates.kappa_f


def test_rates_examples():
    assert pair(identification_rates({1, 2}, {1, 3})) == pytest.approx((0.5, 0.5))
    assert pair(identification_rates({1, 2}, {1, 2})) == pytest.approx((1.0, 0.0))
    assert pair(identification_rates({1, 2, 3}, {1})) == pytest.approx((1 / 3, 0.0))
    assert pair(identification_rates(set(), {4})) == pytest.approx((1.0, 1.0))
    assert pair(identification_rates({4}, set())) == pytest.approx((0.0, 0.0))
    assert pair(identification_rates(set(), set())) == pytest.approx((1.0, 0.0))


def test_rates_relabeling_invariance():
    out = identification_rates({3, 7, 9}, {3, 9, 11})
    relabel = {3: 103, 7: 107, 9: 109, 11: 111}
    same = identification_rates(
        {relabel[v] for v in {3, 7, 9}}, {relabel[v] for v in {3, 9, 11}}
    )
    assert out == same
