"""Geometric Brownian motion paths and the normalized RL state."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

# Paths are drawn in fixed-size blocks, each from its own Philox counter
# stream, so the batch does not depend on how blocks are scheduled.
BLOCK_SIZE = 1024

STREAM_PATHS = 0
STREAM_ACTIONS = 1


@dataclass(frozen=True)
class MarketParams:
    mu: float = 0.04
    sigma: float = 0.2
    r: float = 0.04
    dt: float = 1.0 / 252.0
    n_steps: int = 28
    s0: float = 1.0

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (math.isfinite(self.mu) and math.isfinite(self.r)):
            raise ValueError("mu and r must be finite")

    @property
    def maturity(self) -> float:
        return self.n_steps * self.dt

    @property
    def gamma(self) -> float:
        """One-step discount factor exp(-r dt)."""
        return math.exp(-self.r * self.dt)

    @classmethod
    def from_maturity(cls, maturity: float, n_steps: int, **kw) -> "MarketParams":
        return cls(dt=maturity / n_steps, n_steps=n_steps, **kw)


@dataclass(frozen=True)
class PathBatch:
    prices: np.ndarray  # (n_paths, n_steps + 1)
    seed: int
    params: MarketParams

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    def states(self) -> np.ndarray:
        """Normalized states X_t for every entry of the batch."""
        return normalize_state(np.arange(self.params.n_steps + 1), self.prices, self.params)


def philox_generator(seed: int, stream: int = 0, block: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream, block).

    The stream and block indices live in the high words of the Philox
    counter, so distinct triples never overlap.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(block), int(stream)])
    return np.random.Generator(bitgen)


def standard_normals(seed: int, stream: int, block: int, shape) -> np.ndarray:
    """Standard normals by inverse CDF of open-interval uniforms."""
    u = philox_generator(seed, stream, block).random(shape)
    u += 2.0**-54  # shift [0, 1) onto (0, 1)
    return ndtri(u)


def n_workers() -> int:
    env = os.environ.get("HEDGELAB_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _simulate_block(params: MarketParams, seed: int, block: int, n: int) -> np.ndarray:
    z = standard_normals(seed, STREAM_PATHS, block, (n, params.n_steps))
    drift = (params.mu - 0.5 * params.sigma**2) * params.dt
    log_inc = drift + params.sigma * math.sqrt(params.dt) * z
    out = np.empty((n, params.n_steps + 1))
    out[:, 0] = 0.0
    np.cumsum(log_inc, axis=1, out=out[:, 1:])
    return params.s0 * np.exp(out)


def simulate_paths(params: MarketParams, n_paths: int, seed: int) -> PathBatch:
    """Exact log-Euler GBM paths, shape (n_paths, n_steps + 1)."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"n_paths must be a positive integer, got {n_paths}")
    blocks = [
        (b, min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE))
        for b in range(-(-n_paths // BLOCK_SIZE))
    ]
    workers = min(n_workers(), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda bn: _simulate_block(params, seed, *bn), blocks))
    else:
        parts = [_simulate_block(params, seed, b, n) for b, n in blocks]
    prices = np.concatenate(parts, axis=0)
    # the cumulative sum starts at exactly 0, so column 0 is s0 bitwise
    if not np.all(prices > 0):
        raise FloatingPointError("non-positive price generated")
    prices.setflags(write=False)
    return PathBatch(prices=prices, seed=int(seed), params=params)


def normalize_state(t_index, s_t, params: MarketParams):
    """X_t = -(mu - sigma^2/2) t + log S_t, with t = t_index * dt."""
    s_t = np.asarray(s_t, dtype=float)
    if np.any(s_t <= 0):
        raise ValueError("prices must be positive")
    t_index = np.asarray(t_index)
    if np.any(t_index < 0) or np.any(t_index > params.n_steps):
        raise ValueError("t_index out of range")
    x = -(params.mu - 0.5 * params.sigma**2) * (t_index * params.dt) + np.log(s_t)
    return float(x) if np.ndim(x) == 0 else x
