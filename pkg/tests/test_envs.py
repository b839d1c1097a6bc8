import math
import warnings

import numpy as np
import pytest

from hedgelab.accounting import CostSpec
from hedgelab.market import MarketParams
from hedgelab.policies import BSDeltaPolicy, ConstantPolicy
from hedgelab.qlbs import QlbsConfig, qlbs_price, qlbs_rollout, risk_shares
from hedgelab.rlop import (InitialWealth, RlopConfig, bs_reference, deterministic_price, expiry_mask, optimal_wealth,
                           penalty, penalty_slope, rlop_price, rlop_rollout, wealth_gradient)

# --- QLBS -----------------------------------------------------------------------


def test_qlbs_rewards_telescope_and_terminal_value_is_payoff():
    cfg = QlbsConfig(MarketParams(n_steps=15), CostSpec(0.01), lam=0.05, batch_size=64)
    ro = qlbs_rollout(ConstantPolicy(0.5, 0.2), cfg, 3)
    np.testing.assert_allclose(ro.rewards.sum(axis=1), ro.v_hat[:, 0] - ro.v_hat[:, -1], atol=1e-12)
    np.testing.assert_allclose(ro.portfolio[:, -1], np.maximum(ro.batch.prices[:, -1] - 1.0, 0.0))
    # the diminishing factor vanishes at T, leaving only the risk tail
    np.testing.assert_allclose(ro.v_hat[:, -1], -cfg.lam * ro.risk[-1])
    assert ro.risk[-1] > 0


def test_mean_initial_value_falls_with_risk_aversion():
    pol = ConstantPolicy(0.3, 0.5)
    v0 = [qlbs_rollout(pol, QlbsConfig(lam=lam, batch_size=128), 1).v_hat[:, 0].mean() for lam in (0, 0.01, 0.1, 1)]
    assert np.all(np.diff(v0) < 0)


def test_zero_vol_world_has_no_risk():
    flat = MarketParams(sigma=0.0)
    ro = qlbs_rollout(BSDeltaPolicy(flat, 1.0), QlbsConfig(flat, lam=1.0, batch_size=8), 0)
    assert np.max(np.abs(ro.risk)) < 1e-12


def test_risk_shares_average_to_the_std():
    vals = np.random.default_rng(0).normal(size=(200, 4)) * [1, 2, 0, 3]
    risk, share = risk_shares(vals)
    np.testing.assert_allclose(share.mean(axis=0), risk, rtol=1e-12)
    np.testing.assert_allclose(risk, vals.std(axis=0, ddof=1))
    assert np.all(share[:, 2] == 0)


def test_training_rewards_keep_the_batch_total():
    cfg = QlbsConfig(lam=0.2, batch_size=64)
    ro = qlbs_rollout(ConstantPolicy(0.5, 0.4), cfg, 2)
    tr = ro.training_rewards(cfg.lam, cfg.params.gamma)
    np.testing.assert_allclose(tr.sum(axis=1).mean(), ro.rewards.sum(axis=1).mean(), atol=1e-12)
    assert not np.allclose(tr, ro.rewards)


def test_bs_delta_qlbs_price_near_black_scholes():
    p = MarketParams(sigma=0.2, n_steps=28)
    cfg = QlbsConfig(p, batch_size=512)
    est = qlbs_price(BSDeltaPolicy(p, 1.0), cfg, n_batches=4, seed=0)
    bs = bs_reference(RlopConfig(p))
    assert abs(est.price - bs) < 3 * est.stderr + 2e-4
    assert est.n_paths == 2048


def test_qlbs_config_validation():
    with pytest.raises(ValueError):
        QlbsConfig(lam=-1.0)
    with pytest.raises(ValueError):
        QlbsConfig(batch_size=1)


# --- RLOP -----------------------------------------------------------------------


def test_penalty_identities():
    x = np.linspace(-2, 2, 9)
    assert np.all(penalty(x, x, "absolute") == 0) and np.all(penalty(x, x, "squared") == 0)
    assert penalty(1.0, 3.0) == -2.0 and penalty(1.0, 3.0, "squared") == -4.0
    h = 1e-7
    for kind in ("absolute", "squared"):
        fd = (penalty(1.0, 0.4 + h, kind) - penalty(1.0, 0.4 - h, kind)) / (2 * h)
        assert penalty_slope(1.0, 0.4, kind) == pytest.approx(fd, rel=1e-6)
    with pytest.raises(ValueError):
        penalty(1.0, 2.0, "huber")


def test_expiry_mask_structure():
    m = expiry_mask(5)
    assert m.shape == (5, 5)
    for i in range(1, 6):
        assert m[i - 1].tolist() == [t < i for t in range(5)]
    assert m.sum() == 15


def test_actions_beyond_expiry_do_not_touch_the_portfolio():
    cfg = RlopConfig(MarketParams(n_steps=6), CostSpec(0.01), batch_size=4)
    ro = rlop_rollout(ConstantPolicy(0.5, 0.3), InitialWealth(np.full(6, 0.05)), cfg, 1)
    assert np.all(np.isnan(ro.actions[:, ~ro.mask]))
    assert not np.any(np.isnan(ro.valid_actions))
    assert ro.features.shape == (4 * 21, 3)
    sr = ro.step_rewards()
    np.testing.assert_allclose(sr.sum(axis=(1, 2)), ro.rewards.sum(axis=1))
    assert np.all(sr[:, ~np.eye(6, dtype=bool)] == 0)


def test_wealth_gradient_matches_finite_difference():
    cfg = RlopConfig(MarketParams(n_steps=5), penalty_kind="squared", batch_size=32)
    pol = ConstantPolicy(0.4, 0.2)
    w = np.full(5, 0.02)
    g = wealth_gradient(rlop_rollout(pol, InitialWealth(w), cfg, 0), cfg)
    h = 1e-6
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        up = rlop_rollout(pol, InitialWealth(w + e), cfg, 0).rewards.mean(axis=0)[i]
        dn = rlop_rollout(pol, InitialWealth(w - e), cfg, 0).rewards.mean(axis=0)[i]
        assert g[i] == pytest.approx((up - dn) / (2 * h), rel=1e-6)


def test_deterministic_world_replication_cost():
    p = MarketParams(mu=0.1, sigma=0.0, r=0.04, n_steps=28)
    cfg = RlopConfig(p, strike=1.0, batch_size=8)
    ref = math.exp(-p.r * p.maturity) * (math.exp(p.mu * p.maturity) - 1.0)
    assert deterministic_price(cfg) == pytest.approx(ref, rel=1e-14)
    # holding nothing, the best capital is exactly the discounted payoff
    assert optimal_wealth(ConstantPolicy(0.0, 0.0), cfg, 0) == pytest.approx(ref, abs=1e-14)


def test_bs_delta_optimal_wealth_near_bs():
    p = MarketParams(sigma=0.2, n_steps=28)
    cfg = RlopConfig(p, batch_size=2000, penalty_kind="squared")
    assert optimal_wealth(BSDeltaPolicy(p, 1.0), cfg, 4) == pytest.approx(bs_reference(cfg), rel=0.02)


def test_rlop_price_reports_untrained_wealth():
    cfg = RlopConfig(MarketParams(n_steps=4))
    w = InitialWealth.lower_bound(cfg)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        assert rlop_price(None, w, cfg).status == "untrained"
    w.trained = True
    res = rlop_price(None, w, cfg, expiry_index=2)
    assert res.status == "ok" and res.price == w.pi0[1]
    with pytest.raises(ValueError):
        rlop_price(None, w, cfg, expiry_index=5)
    with pytest.raises(ValueError):
        InitialWealth([0.1, np.inf])
