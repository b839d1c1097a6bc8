"""RLOP environment: an ensemble of forward-replicating portfolios.

Along each simulated path the agent runs one self-financing portfolio per
expiry i = 1..T.  Portfolio i starts from the learned initial wealth
pi0[i - 1], trades only at steps t < i, and is scored once, at its expiry,
by the replication penalty H(h(S_i), Pi_i).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .accounting import CostSpec, call_payoff, rlop_forward_portfolio
from .market import STREAM_ACTIONS, MarketParams, PathBatch, simulate_paths, standard_normals
from .policies import make_features, sample_actions
from .pricers import EuroCall, bs_price

PENALTIES = ("absolute", "squared")


@dataclass(frozen=True)
class RlopConfig:
    params: MarketParams = field(default_factory=MarketParams)
    cost: CostSpec = field(default_factory=CostSpec)
    strike: float = 1.0
    penalty_kind: str = "absolute"
    batch_size: int = 64

    def __post_init__(self):
        if self.penalty_kind not in PENALTIES:
            raise ValueError(f"penalty_kind must be one of {PENALTIES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.strike <= 0:
            raise ValueError("strike must be positive")


@dataclass
class InitialWealth:
    pi0: np.ndarray  # one entry per expiry i = 1..T
    trained: bool = False

    def __post_init__(self):
        self.pi0 = np.asarray(self.pi0, dtype=float)
        if not np.all(np.isfinite(self.pi0)):
            raise ValueError("initial wealth must be finite")

    @classmethod
    def lower_bound(cls, cfg: RlopConfig) -> "InitialWealth":
        """Start every expiry at its no-arbitrage lower bound."""
        p = cfg.params
        taus = p.dt * np.arange(1, p.n_steps + 1)
        return cls(np.maximum(p.s0 - cfg.strike * np.exp(-p.r * taus), 0.0))


def penalty(x, y, kind: str = "absolute"):
    """H(x, y): minus the absolute or squared replication error."""
    err = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if kind == "absolute":
        out = -np.abs(err)
    elif kind == "squared":
        out = -(err**2)
    else:
        raise ValueError(f"unknown penalty {kind!r}")
    return float(out) if np.ndim(out) == 0 else out


def penalty_slope(x, y, kind: str):
    """dH/dy, the sensitivity of the penalty to the portfolio value."""
    err = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.sign(err) if kind == "absolute" else 2.0 * err


def expiry_mask(n_steps: int) -> np.ndarray:
    """mask[i - 1, t] is True iff portfolio i trades at step t (t < i)."""
    i = np.arange(1, n_steps + 1)[:, None]
    return np.arange(n_steps)[None, :] < i


@dataclass
class RlopRollout:
    batch: PathBatch
    mask: np.ndarray  # (T, T) expiry x step
    features: np.ndarray  # (n_valid, 3), valid (path, expiry, step) triples in C order
    actions: np.ndarray  # (paths, T, T) with NaN where the mask is False
    terminal: np.ndarray  # (paths, T) portfolio value at each expiry
    payoffs: np.ndarray  # (paths, T)
    rewards: np.ndarray  # (paths, T) R_i
    costs: np.ndarray  # (paths, T) cumulative cost of each portfolio

    @property
    def valid_actions(self) -> np.ndarray:
        return self.actions[:, self.mask]

    def step_rewards(self) -> np.ndarray:
        """(paths, T, T) per-step rewards: R_i at step i - 1, else 0."""
        n = self.mask.shape[0]
        out = np.zeros(self.actions.shape)
        out[:, np.arange(n), np.arange(n)] = self.rewards
        return out


def rlop_rollout(policy, wealth: InitialWealth, cfg: RlopConfig, seed: int) -> RlopRollout:
    p = cfg.params
    n = p.n_steps
    if wealth.pi0.shape != (n,):
        raise ValueError(f"initial wealth needs {n} entries, got {wealth.pi0.shape}")
    batch = simulate_paths(p, cfg.batch_size, seed)
    mask = expiry_mask(n)
    expiry, step = np.nonzero(mask)  # expiry index i - 1 and trading step t
    tte = (expiry + 1 - step) * p.dt

    feats = make_features(step[None, :], batch.prices[:, step], tte[None, :], p, cfg.strike)
    feats = feats.reshape(-1, 3)
    z = standard_normals(seed, STREAM_ACTIONS, 0, (cfg.batch_size, len(step)))
    flat = sample_actions(policy, feats, z).reshape(cfg.batch_size, len(step))
    actions = np.full((cfg.batch_size, n, n), np.nan)
    actions[:, expiry, step] = flat

    h = call_payoff(cfg.strike)
    terminal = np.empty((cfg.batch_size, n))
    costs = np.empty((cfg.batch_size, n))
    for i in range(1, n + 1):
        sub = replace(p, n_steps=i)
        ledger = rlop_forward_portfolio(
            np.full(cfg.batch_size, wealth.pi0[i - 1]), batch.prices[:, : i + 1], actions[:, i - 1, :i], sub, cfg.cost
        )
        terminal[:, i - 1] = ledger.terminal_value
        costs[:, i - 1] = ledger.cum_cost
    payoffs = h(batch.prices[:, 1:])
    rewards = penalty(payoffs, terminal, cfg.penalty_kind)
    return RlopRollout(batch, mask, feats, actions, terminal, payoffs, rewards, costs)


def wealth_gradient(ro: RlopRollout, cfg: RlopConfig) -> np.ndarray:
    """Exact gradient of the mean reward with respect to each pi0 entry.

    Terminal wealth is pi0 * exp(r * i * dt) plus terms free of pi0.
    """
    p = cfg.params
    growth = np.exp(p.r * p.dt * np.arange(1, p.n_steps + 1))
    return np.mean(penalty_slope(ro.payoffs, ro.terminal, cfg.penalty_kind), axis=0) * growth


def optimal_wealth(policy, cfg: RlopConfig, seed: int, expiry: int | None = None) -> float:
    """Best initial wealth for a fixed policy at one expiry.

    The penalty is a function of pi0 * growth - (payoff - gains), so the
    optimum is the discounted median (absolute) or mean (squared) of
    payoff minus the pi0-free part of terminal wealth.
    """
    p = cfg.params
    n = p.n_steps if expiry is None else expiry
    zero = InitialWealth(np.zeros(p.n_steps))
    ro = rlop_rollout(policy, zero, cfg, seed)
    shortfall = ro.payoffs[:, n - 1] - ro.terminal[:, n - 1]
    centre = np.median(shortfall) if cfg.penalty_kind == "absolute" else np.mean(shortfall)
    return float(centre * math.exp(-p.r * p.dt * n))


@dataclass(frozen=True)
class RlopPrice:
    price: float
    penalty: float
    status: str  # "ok" or "untrained"


def rlop_price(policy, wealth: InitialWealth, cfg: RlopConfig, expiry_index: int | None = None,
               final_penalty: float = float("nan")) -> RlopPrice:
    """The learned initial capital for one expiry (the last by default)."""
    n = cfg.params.n_steps
    i = n if expiry_index is None else expiry_index
    if not 1 <= i <= n:
        raise ValueError(f"expiry_index must be in [1, {n}]")
    status = "ok"
    if not wealth.trained:
        warnings.warn("initial wealth has not been trained", stacklevel=2)
        status = "untrained"
    return RlopPrice(float(wealth.pi0[i - 1]), final_penalty, status)


def deterministic_price(cfg: RlopConfig, expiry_index: int | None = None) -> float:
    """exp(-r T) h(S_T) on the sigma = 0 path, the replication cost there."""
    p = cfg.params
    n = p.n_steps if expiry_index is None else expiry_index
    s_T = p.s0 * math.exp(p.mu * n * p.dt)
    return math.exp(-p.r * n * p.dt) * max(s_T - cfg.strike, 0.0)


def bs_reference(cfg: RlopConfig) -> float:
    """Black-Scholes price of the final-expiry call in the same world."""
    p = cfg.params
    return bs_price(EuroCall(cfg.strike, p.maturity, p.s0, p.r), p.sigma)
