import math

import numpy as np
import pytest

from hedgelab.market import BLOCK_SIZE, MarketParams, normalize_state, philox_generator, simulate_paths
from hedgelab.policies import BSDeltaPolicy, ConstantPolicy, decode_features, make_features
from hedgelab.seeding import derive_seed


def test_paths_are_deterministic_and_read_only():
    p = MarketParams(n_steps=10)
    a = simulate_paths(p, 300, 7).prices
    b = simulate_paths(p, 300, 7).prices
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate_paths(p, 300, 8).prices)
    assert np.all(a[:, 0] == p.s0)
    with pytest.raises(ValueError):
        a[0, 0] = 2.0


def test_batch_prefix_is_stable_across_sizes():
    # blocks of BLOCK_SIZE paths draw from their own counters
    p = MarketParams(n_steps=5)
    small = simulate_paths(p, 100, 3).prices
    big = simulate_paths(p, BLOCK_SIZE + 50, 3).prices
    assert np.array_equal(small, big[:100])


def test_log_returns_have_gbm_moments():
    p = MarketParams(mu=0.1, sigma=0.3, dt=1 / 52, n_steps=4)
    x = np.log(simulate_paths(p, 40_000, 11).prices[:, -1] / p.s0)
    t = p.maturity
    assert x.mean() == pytest.approx((p.mu - 0.5 * p.sigma**2) * t, abs=4 * p.sigma * math.sqrt(t / 40_000))
    assert x.std() == pytest.approx(p.sigma * math.sqrt(t), rel=0.02)


def test_zero_vol_path_is_deterministic_drift():
    p = MarketParams(mu=0.05, sigma=0.0, n_steps=20)
    s = simulate_paths(p, 3, 0).prices
    np.testing.assert_allclose(s, np.broadcast_to(p.s0 * np.exp(p.mu * p.dt * np.arange(21)), s.shape), rtol=1e-14)
    # the normalized state is constant when sigma = 0
    np.testing.assert_allclose(normalize_state(np.arange(21), s[0], p), math.log(p.s0), atol=1e-14)


def test_params_validation():
    for bad in (dict(sigma=-0.1), dict(s0=0.0), dict(dt=0.0), dict(n_steps=0), dict(mu=float("inf"))):
        with pytest.raises(ValueError):
            MarketParams(**bad)
    p = MarketParams.from_maturity(0.5, 10, sigma=0.3)
    assert p.dt == pytest.approx(0.05) and p.n_steps == 10
    with pytest.raises(ValueError):
        philox_generator(-1)


def test_derive_seed_is_stable_and_spreads():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert len({derive_seed(0, k) for k in range(1000)}) == 1000
    assert 0 <= derive_seed(5) < 2**63


def test_features_round_trip_and_delta_policy():
    p = MarketParams(sigma=0.25, n_steps=10)
    s = np.array([[0.9, 1.0, 1.1]])
    t = np.array([[0, 3, 9]])
    tte = (p.n_steps - t) * p.dt
    f = make_features(t, s, tte, p, 1.05)
    assert f.shape == (1, 3, 3)
    tt, ss, te = decode_features(f, p, 1.05)
    np.testing.assert_allclose(ss, s, rtol=1e-13)
    np.testing.assert_allclose(te, tte, rtol=1e-13)
    mean, std = BSDeltaPolicy(p, 1.05).distribution(f)
    assert np.all(np.diff(mean) > 0) and np.all(std == 0)
    m, sd = ConstantPolicy(0.4, 0.1).distribution(f)
    assert np.all(m == 0.4) and np.all(sd == 0.1)
