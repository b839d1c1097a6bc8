"""Self-financing hedge ledgers with proportional transaction costs.

Every function here accepts a single path of shape ``(n_steps + 1,)`` or a
batch of shape ``(n_paths, n_steps + 1)``; actions carry one fewer column.
Costs follow ``TC(du, S) = epsilon * |du| * S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .market import MarketParams


@dataclass(frozen=True)
class CostSpec:
    epsilon: float = 0.0
    liquidate_at_expiry: bool = False
    charge_initial: bool = False

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class HedgeLedger:
    """Positions, cash and value along one path or a batch of paths.

    ``positions`` has n_steps + 1 columns: the last one is the position
    carried through expiry (``u_{T-1}``, or 0 when liquidating).
    """

    path: np.ndarray
    positions: np.ndarray
    cash: np.ndarray
    value: np.ndarray
    costs: np.ndarray  # cost paid at each step, column 0 is the entry cost
    params: MarketParams
    cost: CostSpec

    @property
    def cum_cost(self):
        return self.costs.sum(axis=-1)

    @property
    def initial_value(self):
        return self.value[..., 0]

    @property
    def terminal_value(self):
        return self.value[..., -1]

    def self_financing_residual(self) -> np.ndarray:
        """Relative residual of the self-financing identity at each rebalance."""
        s_next = self.path[..., 1:]
        u, b = self.positions, self.cash
        growth = math.exp(self.params.r * self.params.dt)
        lhs = u[..., :-1] * s_next + growth * b[..., :-1]
        rhs = u[..., 1:] * s_next + b[..., 1:] + self.costs[..., 1:]
        scale = np.maximum.reduce([np.abs(lhs), np.abs(rhs), np.abs(u[..., 1:] * s_next), np.ones_like(lhs)])
        return np.abs(lhs - rhs) / scale

    def value_residual(self) -> np.ndarray:
        return np.abs(self.value - (self.positions * self.path + self.cash))


def tc_linear(delta_u, s, cost: CostSpec):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("price must be positive")
    out = cost.epsilon * np.abs(delta_u) * s
    return float(out) if np.ndim(out) == 0 else out


def _check(path, actions, params: MarketParams):
    path = np.asarray(path, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if path.shape[-1] != params.n_steps + 1:
        raise ValueError(f"path has {path.shape[-1]} points, expected {params.n_steps + 1}")
    if actions.shape[-1] != params.n_steps:
        raise ValueError(f"got {actions.shape[-1]} actions, expected {params.n_steps}")
    if path.shape[:-1] != actions.shape[:-1]:
        raise ValueError("path and actions batch shapes differ")
    return path, actions


def _positions(actions: np.ndarray, cost: CostSpec) -> np.ndarray:
    last = np.zeros_like(actions[..., -1:]) if cost.liquidate_at_expiry else actions[..., -1:]
    return np.concatenate([actions, last], axis=-1)


def _payoff_values(payoff, s_T):
    if callable(payoff):
        return np.asarray(payoff(s_T), dtype=float)
    return np.broadcast_to(np.asarray(payoff, dtype=float), np.shape(s_T)).copy()


def qlbs_backward_portfolio(path, actions, payoff, params: MarketParams, cost: CostSpec) -> HedgeLedger:
    """Portfolio values computed backward from the terminal condition.

    ``payoff`` is either a callable h(S_T) or the terminal values directly.
    """
    path, actions = _check(path, actions, params)
    n = params.n_steps
    gamma = params.gamma
    u = _positions(actions, cost)
    costs = np.zeros(path.shape)
    costs[..., 1:] = cost.epsilon * np.abs(np.diff(u, axis=-1)) * path[..., 1:]

    value = np.empty(path.shape)
    value[..., n] = _payoff_values(payoff, path[..., n])
    for t in range(n - 1, -1, -1):
        value[..., t] = u[..., t] * path[..., t] + gamma * (
            value[..., t + 1] + costs[..., t + 1] - u[..., t] * path[..., t + 1]
        )
    cash = value - u * path
    return HedgeLedger(path, u, cash, value, costs, params, cost)


def portfolio_decomposition(path, actions, payoff, params: MarketParams, cost: CostSpec):
    """Closed-form split of the time-0 backward portfolio value.

    Returns ``(hedge_leg, friction_coefficient, terminal_leg)`` with

        Pi_0 = hedge_leg + epsilon * friction_coefficient + gamma^T * terminal_leg

    where the friction coefficient is sum_j gamma^(j+1) |du_j| S_(j+1), the
    terminal leg is h(S_T) - u_T S_T, and the hedge leg is u_0 S_0 plus the
    discounted rebalancing cash flows sum_j gamma^(j+1) du_j S_(j+1).  None of
    the three depends on epsilon, so Pi_0 is affine in epsilon.
    """
    path, actions = _check(path, actions, params)
    n = params.n_steps
    u = _positions(actions, cost)
    du = np.diff(u, axis=-1)
    disc = params.gamma ** np.arange(1, n + 1)
    hedge = u[..., 0] * path[..., 0] + np.sum(disc * du * path[..., 1:], axis=-1)
    friction = np.sum(disc * np.abs(du) * path[..., 1:], axis=-1)
    terminal = _payoff_values(payoff, path[..., n]) - u[..., n] * path[..., n]
    return hedge, friction, terminal


def rlop_forward_portfolio(pi0, path, actions, params: MarketParams, cost: CostSpec) -> HedgeLedger:
    """Self-financing portfolio rolled forward from initial wealth ``pi0``."""
    path, actions = _check(path, actions, params)
    pi0 = np.asarray(pi0, dtype=float)
    if not np.all(np.isfinite(pi0)):
        raise ValueError("pi0 must be finite")
    n = params.n_steps
    growth = math.exp(params.r * params.dt)
    u = _positions(actions, cost)
    costs = np.zeros(path.shape)
    costs[..., 1:] = cost.epsilon * np.abs(np.diff(u, axis=-1)) * path[..., 1:]
    if cost.charge_initial:
        costs[..., 0] = cost.epsilon * np.abs(u[..., 0]) * path[..., 0]

    cash = np.empty(path.shape)
    cash[..., 0] = pi0 - u[..., 0] * path[..., 0] - costs[..., 0]
    for t in range(n):
        cash[..., t + 1] = (
            u[..., t] * path[..., t + 1] + growth * cash[..., t]
            - u[..., t + 1] * path[..., t + 1] - costs[..., t + 1]
        )
    value = u * path + cash
    return HedgeLedger(path, u, cash, value, costs, params, cost)


def call_payoff(strike: float) -> Callable:
    def h(s):
        return np.maximum(np.asarray(s, dtype=float) - strike, 0.0)

    h.strike = strike
    return h
