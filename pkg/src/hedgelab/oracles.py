"""Reference computations that share no code with the pricers or ledgers."""

from __future__ import annotations

import math

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(160)


def bs_call_quadrature(spot: float, strike: float, tau: float, r: float, sigma: float) -> float:
    """Discounted lognormal payoff integral by composite Gauss-Legendre in z."""
    vol = sigma * math.sqrt(tau)
    drift = (r - 0.5 * sigma * sigma) * tau
    z_star = (math.log(strike / spot) - drift) / vol  # payoff is zero below z_star
    total = 0.0
    edges = np.linspace(z_star, max(z_star, 0.0) + 14.0, 9)
    for a, b in zip(edges[:-1], edges[1:]):
        z = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        f = (spot * np.exp(drift + vol * z) - strike) * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        total += 0.5 * (b - a) * float(_GL_W @ f)
    return math.exp(-r * tau) * total


def jd_call_monte_carlo(spot, strike, tau, r, sigma, intensity, jump_mean, jump_vol, n_paths, seed):
    """(price, standard error) of a Merton call by direct simulation of S_tau."""
    rng = np.random.default_rng(seed)
    kbar = math.exp(jump_mean + 0.5 * jump_vol**2) - 1.0
    n_jumps = rng.poisson(intensity * tau, n_paths)
    z = rng.standard_normal(n_paths)
    jumps = jump_mean * n_jumps + jump_vol * np.sqrt(n_jumps) * rng.standard_normal(n_paths)
    log_s = math.log(spot) + (r - intensity * kbar - 0.5 * sigma**2) * tau + sigma * math.sqrt(tau) * z + jumps
    pay = math.exp(-r * tau) * np.maximum(np.exp(log_s) - strike, 0.0)
    return float(pay.mean()), float(pay.std(ddof=1) / math.sqrt(n_paths))


def backward_values_loop(path, actions, terminal, gamma, epsilon, liquidate=False):
    """Scalar-loop backward recursion for one path."""
    n = len(actions)
    u = list(actions) + [0.0 if liquidate else actions[-1]]
    v = [0.0] * (n + 1)
    v[n] = terminal
    for t in range(n - 1, -1, -1):
        tc = epsilon * abs(u[t + 1] - u[t]) * path[t + 1]
        v[t] = u[t] * path[t] + gamma * (v[t + 1] + tc - u[t] * path[t + 1])
    return v


def forward_terminal_loop(pi0, path, actions, growth, epsilon, liquidate=False):
    """Scalar-loop forward roll of a self-financing portfolio for one path."""
    n = len(actions)
    u = list(actions) + [0.0 if liquidate else actions[-1]]
    cash = pi0 - u[0] * path[0]
    for t in range(n):
        cash = u[t] * path[t + 1] + growth * cash - u[t + 1] * path[t + 1] - epsilon * abs(u[t + 1] - u[t]) * path[t + 1]
    return u[n] * path[n] + cash
