"""Discrete delta hedging of a short call along a realized path.

The hedger sells one call for its premium, holds u_t shares chosen by a
delta source, and rebalances once per observation through the same
self-financing ledger the RL environments use.  The hedging error is

    Pi_T = V_T - (S_T - K)^+.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .accounting import CostSpec, HedgeLedger, rlop_forward_portfolio
from .market import MarketParams
from .policies import make_features
from .pricers import EuroCall, bs_delta_array, numeric_delta


class DeltaSource(Protocol):
    def __call__(self, t_index: int, spot: float, tau: float) -> float: ...


@dataclass(frozen=True)
class HedgePlan:
    model: str
    strike: float
    tau: float  # years from entry to expiry
    premium: float
    rate: float = 0.0
    entry_date: str = ""
    cost: CostSpec = field(default_factory=CostSpec)

    def __post_init__(self):
        if not (self.premium > 0 and self.strike > 0 and self.tau > 0):
            raise ValueError(f"invalid hedge plan: {self}")


@dataclass(frozen=True)
class HedgeOutcome:
    pi_T: float
    total_cost: float
    turnover: float
    ledger: HedgeLedger


@dataclass(frozen=True)
class HedgeMetrics:
    hedging_rmse: float
    avg_trading_cost: float
    shortfall_prob: float
    n_hedges: int

    def __post_init__(self):
        if not (0.0 <= self.shortfall_prob <= 1.0) or self.hedging_rmse < 0:
            raise ValueError(f"metrics out of range: {self}")


def run_hedge(plan: HedgePlan, path, delta_source: DeltaSource) -> HedgeOutcome:
    """Hedge along ``path`` (entry through expiry, equally spaced in time)."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 1 or len(path) < 2:
        raise ValueError("path needs at least the entry and expiry observations")
    if not np.all(np.isfinite(path)) or np.any(path <= 0):
        raise ValueError("path must be finite and positive")
    n = len(path) - 1
    params = MarketParams.from_maturity(plan.tau, n, mu=plan.rate, sigma=0.0, r=plan.rate, s0=float(path[0]))
    actions = np.array([delta_source(t, float(path[t]), plan.tau - t * params.dt) for t in range(n)])
    ledger = rlop_forward_portfolio(plan.premium, path, actions, params, plan.cost)
    pi_T = float(ledger.terminal_value - max(path[-1] - plan.strike, 0.0))
    turnover = float(np.abs(np.diff(ledger.positions)).sum())
    return HedgeOutcome(pi_T, float(ledger.cum_cost), turnover, ledger)


def metrics(pi_T, costs) -> HedgeMetrics | None:
    """RMSE of Pi_T, mean cost and P(Pi_T < 0); None for an empty list."""
    pi_T = np.asarray(pi_T, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if pi_T.size == 0:
        return None
    if pi_T.shape != costs.shape:
        raise ValueError("pi_T and costs must have the same length")
    return HedgeMetrics(
        hedging_rmse=float(np.sqrt(np.mean(pi_T**2))),
        avg_trading_cost=float(np.mean(costs)),
        shortfall_prob=float(np.mean(pi_T < 0)),
        n_hedges=int(pi_T.size),
    )


def equal_day_aggregate(per_day) -> HedgeMetrics:
    """Unweighted mean across days; each day counts once."""
    days = [m for m in per_day if m is not None]
    if not days:
        raise ValueError("need at least one day")
    return HedgeMetrics(
        hedging_rmse=math.fsum(m.hedging_rmse for m in days) / len(days),
        avg_trading_cost=math.fsum(m.avg_trading_cost for m in days) / len(days),
        shortfall_prob=math.fsum(m.shortfall_prob for m in days) / len(days),
        n_hedges=sum(m.n_hedges for m in days),
    )


def select_strike(strikes, forward: float, target: float = 1.0) -> float:
    """Listed strike whose K/F is closest to ``target``; ties go to the lower strike."""
    strikes = np.unique(np.asarray(strikes, dtype=float))
    if strikes.size == 0:
        raise ValueError("no strikes")
    gap = np.abs(strikes / forward - target)
    return float(strikes[int(np.argmin(gap))])


# --- delta sources ----------------------------------------------------------


def bs_delta_source(sigma: float, strike: float, rate: float) -> DeltaSource:
    def delta(t, spot, tau):
        return float(bs_delta_array(spot, strike, tau, rate, sigma))
    return delta


def numeric_delta_source(price_fn: Callable[[EuroCall], float], strike: float, rate: float,
                         h_rel: float = 1e-4) -> DeltaSource:
    """Central-difference delta of an arbitrary pricer, for JD and SV."""
    def delta(t, spot, tau):
        return float(np.clip(numeric_delta(price_fn, EuroCall(strike, tau, spot, rate), h_rel), 0.0, 1.0))
    return delta


def policy_delta_source(policy, strike: float, params: MarketParams) -> DeltaSource:
    """Mean action of a Gaussian policy; ``params`` sets the state normalization.

    ``params`` describes the hedge's own grid (n_steps, dt), with mu = r by
    default since the realized drift is unobservable.
    """
    def delta(t, spot, tau):
        feats = make_features(np.array([t]), np.array([spot]), np.array([tau]), params, strike)
        mean, _ = policy.distribution(feats)
        return float(mean[0])
    return delta
