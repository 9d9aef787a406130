import numpy as np
import pytest

from gridoutage.swamp import (
    NOISE_FLOOR,
    PriorParams,
    SolverState,
    em_update_noise,
    em_update_priors,
    initial_priors,
)


def make_state(**kw):
    n = kw.pop("n", 8)
    L = kw.pop("L", 10)
    base = dict(
        y=np.zeros(n),
        s_hat=np.zeros(L),
        v_s=np.zeros(L),
        e_hat=np.zeros(n),
        v_e=np.full(n, 1e-12),
        V=np.full(n, 1e-12),
        omega=np.zeros(n),
        g=np.zeros(n),
        iteration=1,
    )
    base.update(kw)
    return SolverState(**base)


def default_priors(**kw):
    base = dict(
        p_o=0.05,
        rho=[0.7, 0.1, 0.1, 0.1],
        mu=[0.0, 0.0, 0.0],
        sigma2=[0.1, 1.0, 10.0],
        noise_var=1e-4,
    )
    base.update(kw)
    return PriorParams(**base)


def test_p_o_floor_and_ceiling():
    pri = default_priors()
    low = em_update_priors(make_state(s_hat=np.zeros(10)), pri)
    assert low.p_o == pytest.approx(1e-12, rel=1e-3)
    high = em_update_priors(make_state(s_hat=np.ones(10)), pri)
    assert high.p_o == pytest.approx(1.0 - 1e-12, rel=1e-3)


def test_p_o_is_mean_activation():
    s = np.array([1.0, 0.0, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    out = em_update_priors(make_state(s_hat=s), default_priors())
    assert out.p_o == pytest.approx(float(s.mean()), abs=1e-12)


def test_weights_stay_normalized():
    rng = np.random.default_rng(0)
    state = make_state(e_hat=rng.normal(0, 2, 8), v_e=np.full(8, 0.01),
                       V=np.full(8, 0.01), omega=rng.normal(0, 1, 8))
    pri = default_priors()
    for _ in range(5):
        pri = em_update_priors(state, pri)
        assert abs(pri.rho.sum() - 1.0) <= 1e-12
        assert np.all(pri.sigma2 >= 1e-12)


def test_gm_recovery_from_samples():
    # pseudo-data drawn from a known two-component mixture; with vanishing
    # pseudo-variance 20 EM passes must land near the true means
    rng = np.random.default_rng(42)
    n = 4000
    comp = rng.integers(0, 2, n)
    samples = np.where(comp == 0, rng.normal(3.0, 0.3, n), rng.normal(-2.0, 0.5, n))
    state = make_state(
        n=n, e_hat=samples, v_e=np.full(n, 1e-12),
        V=np.full(n, 1e-12), omega=np.zeros(n), y=samples,
    )
    # pseudo-data r = e_hat + (y - omega) = 2 * samples unless y == omega;
    # set y = omega so r = samples exactly
    state.omega = samples.copy()
    state.y = samples.copy()
    pri = PriorParams(0.05, [0.02, 0.49, 0.49], [1.0, -1.0], [4.0, 4.0], NOISE_FLOOR)
    for _ in range(20):
        pri = em_update_priors(state, pri)
    got = sorted(pri.mu.tolist())
    assert abs(got[0] - (-2.0)) / 2.0 < 0.1
    assert abs(got[1] - 3.0) / 3.0 < 0.1
    # spike keeps only its floor share: the data are dense
    assert pri.rho[0] < 0.05


def test_noise_update_zero_residual_floors():
    state = make_state(y=np.zeros(8), omega=np.zeros(8), V=np.full(8, 1e-15))
    assert em_update_noise(state, 1e-4) == NOISE_FLOOR


def test_noise_update_hand_evaluated():
    # all squared residuals c, all variances v, current estimate v:
    # each term is (c/v)/(2/v) + 1/(2/v) = (c + v) / 2
    c, v = 0.09, 0.02
    state = make_state(
        y=np.full(8, np.sqrt(c)), omega=np.zeros(8), V=np.full(8, v)
    )
    out = em_update_noise(state, v)
    assert out == pytest.approx((c + v) / 2.0, rel=1e-12)


def test_initial_priors_scale():
    y = np.array([0.0, 1.0, -1.0, 2.0, -2.0])
    pri = initial_priors(y, n_lines=50, n_components=3)
    assert pri.p_o == pytest.approx(5.0 / 50.0)
    assert pri.rho[0] == pytest.approx(0.9)
    scale = float(np.var(y))
    assert pri.sigma2 == pytest.approx([0.1 * scale, scale, 10 * scale])
    assert pri.noise_var == pytest.approx(0.1 * scale)


def test_initial_priors_degenerate_observation():
    pri = initial_priors(np.zeros(6), n_lines=7)
    assert pri.noise_var >= NOISE_FLOOR
    assert np.all(pri.sigma2 > 0)
