"""Discrete delta hedging converges to the BS price.

Sell the call for its BS premium, hold the BS delta, rebalance n times.
The terminal hedging error shrinks like sqrt(dt): each halving of the
step should cut the RMSE by about 1/sqrt(2).
"""

import math

import numpy as np

from hedgelab.accounting import CostSpec, rlop_forward_portfolio
from hedgelab.market import MarketParams, simulate_paths
from hedgelab.policies import BSDeltaPolicy, make_features
from hedgelab.pricers import EuroCall, bs_price

T, K, sigma, r = 28 / 252, 1.0, 0.2, 0.04
premium = bs_price(EuroCall(K, T, 1.0, r), sigma)
print(f"BS premium {premium:.5f}")

prev = None
for n in (35, 70, 140, 280):
    p = MarketParams.from_maturity(T, n, mu=0.08, sigma=sigma, r=r, s0=1.0)
    s = simulate_paths(p, 10_000, seed=n).prices
    steps = np.arange(n)
    x = make_features(steps[None, :], s[:, :n], ((n - steps) * p.dt)[None, :], p, K)
    u = BSDeltaPolicy(p, K).distribution(x.reshape(-1, 3))[0].reshape(s.shape[0], n)
    for eps in (0.0, 0.001):
        led = rlop_forward_portfolio(np.full(len(s), premium), s, u, p, CostSpec(eps))
        err = led.terminal_value - np.maximum(s[:, -1] - K, 0.0)
        rmse = math.sqrt(np.mean(err**2))
        note = "" if eps or prev is None else f"  ratio {rmse / prev:.3f}"
        print(f"n={n:4d} eps={eps:<6g} mean error {err.mean():+.5f}  rmse {rmse:.5f}{note}")
        if eps == 0.0:
            prev = rmse
# with costs, finer rebalancing stops helping: the cost term grows like 1/sqrt(dt)
