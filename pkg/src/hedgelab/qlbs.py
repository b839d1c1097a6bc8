"""Adaptive QLBS environment: forward action sampling, backward portfolios.

The value estimate of path p at step t is

    v[p, t] = -(1 - t/T) * Pi_t[p] - lam * sum_{s >= t} gamma^(s - t) * risk_s

with risk_s the cross-sectional standard deviation of Pi_s over the batch,
and the reward of step t is v[p, t] - v[p, t + 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accounting import CostSpec, HedgeLedger, call_payoff, qlbs_backward_portfolio
from .market import STREAM_ACTIONS, MarketParams, PathBatch, simulate_paths, standard_normals
from .policies import make_features, sample_actions
from .seeding import derive_seed


@dataclass(frozen=True)
class QlbsConfig:
    params: MarketParams = field(default_factory=MarketParams)
    cost: CostSpec = field(default_factory=CostSpec)
    lam: float = 0.0
    strike: float = 1.0
    batch_size: int = 256

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("risk aversion must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for a sample variance")
        if self.strike <= 0:
            raise ValueError("strike must be positive")


@dataclass
class QlbsRollout:
    batch: PathBatch
    features: np.ndarray  # (paths, n_steps, 3)
    actions: np.ndarray  # (paths, n_steps)
    ledger: HedgeLedger
    risk: np.ndarray  # (n_steps + 1,)
    v_hat: np.ndarray  # (paths, n_steps + 1)
    rewards: np.ndarray  # (paths, n_steps)
    risk_share: np.ndarray  # (paths, n_steps + 1), batch mean equals ``risk``

    @property
    def portfolio(self) -> np.ndarray:
        return self.ledger.value

    def training_rewards(self, lam: float, gamma: float) -> np.ndarray:
        """Rewards with each path's share of the dispersion penalty.

        The batch-wide risk term is identical for every path, so its
        score-function gradient vanishes.  Replacing risk_s by the
        path's influence-function share (same batch mean, same first-order
        sensitivity to Pi_s[p]) restores the gradient of the dispersion.
        """
        v = self.v_hat + lam * _discounted_tail(self.risk, gamma)[None, :]
        v = v - lam * _discounted_tail(self.risk_share, gamma)
        return v[:, :-1] - v[:, 1:]


def _discounted_tail(x: np.ndarray, gamma: float) -> np.ndarray:
    """sum_{s >= t} gamma^(s - t) x[..., s] for each t."""
    out = np.empty_like(x, dtype=float)
    acc = np.zeros(x.shape[:-1])
    for t in range(x.shape[-1] - 1, -1, -1):
        acc = x[..., t] + gamma * acc
        out[..., t] = acc
    return out


def risk_shares(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cross-sectional std per column and each row's additive share of it."""
    n = values.shape[0]
    risk = values.std(axis=0, ddof=1)
    dev2 = (values - values.mean(axis=0)) ** 2 * (n / (n - 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(risk > 0, (dev2 + risk**2) / (2 * risk), 0.0)
    return risk, share


def qlbs_rollout(policy, cfg: QlbsConfig, seed: int) -> QlbsRollout:
    p = cfg.params
    n = p.n_steps
    batch = simulate_paths(p, cfg.batch_size, seed)
    steps = np.arange(n)
    tte = (n - steps) * p.dt
    feats = make_features(steps[None, :], batch.prices[:, :n], tte[None, :], p, cfg.strike)
    z = standard_normals(seed, STREAM_ACTIONS, 0, (cfg.batch_size, n))
    actions = sample_actions(policy, feats.reshape(-1, 3), z).reshape(cfg.batch_size, n)

    ledger = qlbs_backward_portfolio(batch.prices, actions, call_payoff(cfg.strike), p, cfg.cost)
    pi = ledger.value
    risk, share = risk_shares(pi)
    decay = 1.0 - np.arange(n + 1) / n
    v_hat = -decay[None, :] * pi - cfg.lam * _discounted_tail(risk, p.gamma)[None, :]
    rewards = v_hat[:, :-1] - v_hat[:, 1:]
    return QlbsRollout(batch, feats, actions, ledger, risk, v_hat, rewards, share)


@dataclass(frozen=True)
class PriceEstimate:
    price: float
    stderr: float
    n_paths: int


def qlbs_price(policy, cfg: QlbsConfig, n_batches: int = 1, seed: int = 0) -> PriceEstimate:
    """Negative mean time-0 value over ``n_batches`` independent rollouts."""
    v0 = []
    for b in range(n_batches):
        ro = qlbs_rollout(policy, cfg, derive_seed(seed, b))
        v0.append(ro.v_hat[:, 0])
    v0 = np.concatenate(v0)
    # the risk term is a per-batch constant, so the spread of v0 is the spread of Pi_0
    stderr = float(v0.std(ddof=1) / math.sqrt(len(v0)))
    return PriceEstimate(price=float(-v0.mean()), stderr=stderr, n_paths=len(v0))
