"""Observation features and the policies that consume them.

A policy exposes ``distribution(features) -> (mean, std)`` over hedge
positions.  Features are rows of

    (t / horizon, (X_t - log K) / (vol * sqrt(horizon)), time_to_expiry / horizon)

with X_t the normalized state, ``horizon = n_steps * dt`` of the world the
policy acts in and ``vol = max(sigma, VOL_FLOOR)``.  Subtracting log K
makes the state free of the price level, so one policy serves any strike
or spot; dividing by the horizon's volatility keeps the moneyness input of
order one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketParams, normalize_state
from .nets import NetParams, policy_forward
from .pricers import bs_delta_array


VOL_FLOOR = 0.05


def _moneyness_scale(params: MarketParams) -> float:
    return max(params.sigma, VOL_FLOOR) * math.sqrt(params.maturity)


def make_features(t_index, prices, time_to_expiry, params: MarketParams, strike: float) -> np.ndarray:
    """Stack features; broadcasting over the three inputs."""
    horizon = params.maturity
    t_index, prices, time_to_expiry = np.broadcast_arrays(
        np.asarray(t_index), np.asarray(prices, dtype=float), np.asarray(time_to_expiry, dtype=float)
    )
    x = (normalize_state(t_index, prices, params) - math.log(strike)) / _moneyness_scale(params)
    return np.stack([t_index * params.dt / horizon, x, time_to_expiry / horizon], axis=-1)


def decode_features(features, params: MarketParams, strike: float):
    """Inverse of ``make_features``: (time in years, spot, time to expiry)."""
    features = np.asarray(features, dtype=float)
    horizon = params.maturity
    t = features[..., 0] * horizon
    log_s = features[..., 1] * _moneyness_scale(params) + math.log(strike) + (params.mu - 0.5 * params.sigma**2) * t
    return t, np.exp(log_s), features[..., 2] * horizon


@dataclass
class GaussianPolicy:
    net: NetParams
    entropy_floor: float = 0.01

    def distribution(self, features):
        return policy_forward(self.net, np.reshape(features, (-1, 3)), self.entropy_floor)


@dataclass
class ConstantPolicy:
    position: float = 0.0
    std: float = 0.0

    def distribution(self, features):
        n = np.reshape(features, (-1, 3)).shape[0]
        return np.full(n, float(self.position)), np.full(n, float(self.std))


@dataclass
class BSDeltaPolicy:
    """Black-Scholes delta at volatility ``sigma`` (the world's by default)."""

    params: MarketParams
    strike: float
    sigma: float | None = None

    def distribution(self, features):
        features = np.reshape(features, (-1, 3))
        _, spot, tte = decode_features(features, self.params, self.strike)
        vol = self.params.sigma if self.sigma is None else self.sigma
        delta = bs_delta_array(spot, self.strike, tte, self.params.r, vol)
        return delta, np.zeros_like(delta)


def sample_actions(policy, features, normals) -> np.ndarray:
    mean, std = policy.distribution(features)
    return mean + std * np.reshape(normals, mean.shape)
