"""Oracle and identity checks behind ``hedgelab verify``.

Deterministic checks must pass exactly at their tolerances.  Statistical
checks depend on Monte-Carlo noise and only warn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accounting as acc
from . import nets
from .config import ExperimentConfig
from .market import MarketParams, philox_generator
from .oracles import backward_values_loop, bs_call_quadrature, forward_terminal_loop
from .policies import BSDeltaPolicy, ConstantPolicy
from .pricers import EuroCall, JDParams, SVParams, bs_price, implied_vol, jd_price, sv_price
from .qlbs import QlbsConfig, qlbs_price, qlbs_rollout

STREAM_VERIFY = 7


@dataclass(frozen=True)
class CheckResult:
    name: str
    kind: str  # deterministic | statistical
    passed: bool
    value: float
    tolerance: float
    detail: str


def _check(name, value, tol, kind="deterministic", detail=""):
    ok = bool(np.isfinite(value) and value <= tol)
    return CheckResult(name, kind, ok, float(value), float(tol), detail or f"max error {value:.3g} (tol {tol:.0e})")


def random_ledger_inputs(rng, n_steps: int, n_paths: int):
    sigma = rng.uniform(0.05, 0.6)
    params = MarketParams(mu=rng.uniform(-0.1, 0.2), sigma=sigma, r=rng.uniform(-0.01, 0.08),
                          dt=rng.uniform(1 / 2520, 1 / 12), n_steps=n_steps, s0=rng.uniform(0.5, 200))
    z = rng.standard_normal((n_paths, n_steps))
    inc = (params.mu - 0.5 * sigma**2) * params.dt + sigma * math.sqrt(params.dt) * z
    path = params.s0 * np.exp(np.concatenate([np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1))
    actions = rng.uniform(-1.5, 1.5, (n_paths, n_steps))
    return params, path, actions


def check_pricers(seed: int = 0, n: int = 1000) -> list[CheckResult]:
    rng = philox_generator(seed, STREAM_VERIFY, 0)
    out = []
    err_q = err_iv = 0.0
    for _ in range(n):
        spot = 100.0
        strike = spot * math.exp(rng.uniform(-0.5, 0.5))
        tau = rng.uniform(0.02, 2.0)
        r = rng.uniform(-0.01, 0.08)
        sigma = rng.uniform(0.05, 0.8)
        opt = EuroCall(strike, tau, spot, r)
        c = bs_price(opt, sigma)
        err_q = max(err_q, abs(c - bs_call_quadrature(spot, strike, tau, r, sigma)))
        if c - float(opt.lower_bound()) > 1e-6 * spot:  # vol is identifiable
            err_iv = max(err_iv, abs(implied_vol(opt, c) - sigma))
    out.append(_check("bs_price vs Gauss-Legendre oracle", err_q, 1e-8))
    out.append(_check("implied-vol round trip", err_iv, 1e-7))

    err_jd = err_sv = 0.0
    for _ in range(50):
        opt = EuroCall(100 * math.exp(rng.uniform(-0.3, 0.3)), rng.uniform(0.05, 1.5), 100.0, rng.uniform(0, 0.06))
        sigma = rng.uniform(0.1, 0.5)
        err_jd = max(err_jd, abs(jd_price(opt, JDParams(sigma, 0.0, -0.1, 0.2)) - bs_price(opt, sigma)))
        sv = SVParams(sigma**2, rng.uniform(0.5, 5), sigma**2, 1e-6, rng.uniform(-0.9, 0.9))
        err_sv = max(err_sv, abs(sv_price(opt, sv) - bs_price(opt, sigma)))
    out.append(_check("jd_price(intensity=0) == bs_price", err_jd, 1e-12))
    out.append(_check("sv_price(xi->0) ~ bs_price", err_sv, 1e-3))
    return out


def check_accounting(seed: int = 0, n_ledgers: int = 10_000, backward=None, decomposition=None) -> list[CheckResult]:
    """Ledger identities; ``backward`` and ``decomposition`` may be swapped in for testing."""
    backward = backward or acc.qlbs_backward_portfolio
    decomposition = decomposition or acc.portfolio_decomposition
    rng = philox_generator(seed, STREAM_VERIFY, 1)
    sf = dec = fb = aff = loop = 0.0
    per_batch = 500
    for b in range(n_ledgers // per_batch):
        params, path, actions = random_ledger_inputs(rng, int(rng.integers(1, 30)), per_batch)
        eps = rng.uniform(0, 0.03)
        cost = acc.CostSpec(eps, liquidate_at_expiry=bool(b % 2))
        h = acc.call_payoff(params.s0 * rng.uniform(0.8, 1.2))
        bwd = backward(path, actions, h, params, cost)
        sf = max(sf, float(np.max(bwd.self_financing_residual())))
        hedge, fric, term = decomposition(path, actions, h, params, cost)
        closed = hedge + eps * fric + params.gamma**params.n_steps * term
        scale = np.maximum(1.0, np.abs(bwd.value[:, 0]))
        dec = max(dec, float(np.max(np.abs(bwd.value[:, 0] - closed) / scale)))
        # affine in epsilon with slope equal to the friction coefficient
        v0 = backward(path, actions, h, params, acc.CostSpec(0.0, cost.liquidate_at_expiry)).value[:, 0]
        aff = max(aff, float(np.max(np.abs(bwd.value[:, 0] - v0 - eps * fric) / scale)))
        pi0 = rng.uniform(0, params.s0, per_batch)
        fwd = acc.rlop_forward_portfolio(pi0, path, actions, params, cost)
        sf = max(sf, float(np.max(fwd.self_financing_residual())))
        back = backward(path, actions, fwd.terminal_value, params, cost)
        fb = max(fb, float(np.max(np.abs(back.value[:, 0] - pi0) / np.maximum(1.0, np.abs(pi0)))))
        # spot-check against the scalar loops
        i = int(rng.integers(per_batch))
        ref_b = backward_values_loop(path[i], actions[i], float(h(path[i, -1])), params.gamma, eps,
                                     cost.liquidate_at_expiry)[0]
        ref_f = forward_terminal_loop(pi0[i], path[i], actions[i], math.exp(params.r * params.dt), eps,
                                      cost.liquidate_at_expiry)
        loop = max(loop, abs(bwd.value[i, 0] - ref_b) / max(1.0, abs(ref_b)),
                   abs(fwd.terminal_value[i] - ref_f) / max(1.0, abs(ref_f)))
    return [
        _check("self-financing residual", sf, 1e-10),
        _check("backward value vs closed-form decomposition", dec, 1e-10),
        _check("backward value affine in epsilon", aff, 1e-10),
        _check("forward/backward consistency", fb, 1e-10),
        _check("vectorized ledgers vs scalar loops", loop, 1e-10),
    ]


def check_qlbs_structure(seed: int = 0) -> list[CheckResult]:
    params = MarketParams(sigma=0.2, n_steps=28)
    policy = ConstantPolicy(0.5, 0.3)
    tele = 0.0
    for lam in (0.0, 0.01):
        ro = qlbs_rollout(policy, QlbsConfig(params, acc.CostSpec(0.005), lam, 1.0, 128), seed)
        tele = max(tele, float(np.max(np.abs(ro.rewards.sum(axis=1) - (ro.v_hat[:, 0] - ro.v_hat[:, -1])))))
    out = [_check("QLBS reward telescoping", tele, 1e-9)]

    v0 = [float(qlbs_rollout(policy, QlbsConfig(params, acc.CostSpec(), lam, 1.0, 128), seed).v_hat[:, 0].mean())
          for lam in (0.0, 0.001, 0.01, 0.1)]
    steps = np.diff(v0)
    out.append(CheckResult("mean v0 strictly decreasing in lambda", "deterministic", bool(np.all(steps < 0)),
                           float(np.max(steps)), 0.0, f"mean v0 = {np.round(v0, 6).tolist()}"))
    flat = MarketParams(sigma=0.0, n_steps=28)
    ro = qlbs_rollout(BSDeltaPolicy(flat, 1.0), QlbsConfig(flat, acc.CostSpec(), 0.1, 1.0, 16), seed)
    out.append(_check("zero risk terms in a sigma = 0 world", float(np.max(np.abs(ro.risk))), 1e-12))
    return out


def check_gradients(seed: int = 0, n_checks: int = 100, tol: float = 1e-4) -> list[CheckResult]:
    """Central finite differences (h = 1e-5) on random coordinates."""
    rng = philox_generator(seed, STREAM_VERIFY, 2)
    worst = 0.0
    h = 1e-5
    for k in range(n_checks):
        head = "policy" if k % 2 == 0 else "value"
        spec = nets.NetSpec(3, 8, 2, head)
        net = nets.NetParams(spec, rng.normal(0, 0.5, spec.n_params), 0)
        x = rng.normal(0, 1, (4, 3))
        if head == "policy":
            a = rng.normal(0, 1, 4)
            w = rng.normal(0, 1, 4)

            def f(theta):
                return float(np.sum(w * nets.log_prob_and_grad(nets.NetParams(spec, theta, 0), x, a, None, 0.01)[0]))

            _, grad = nets.log_prob_and_grad(net, x, a, w, 0.01)
        else:
            y = rng.normal(0, 1, 4)

            def f(theta):
                return nets.value_loss_and_grad(nets.NetParams(spec, theta, 0), x, y)[0]

            _, grad = nets.value_loss_and_grad(net, x, y)
        i = int(rng.integers(spec.n_params))
        e = np.zeros(spec.n_params)
        e[i] = h
        fd = (f(net.theta + e) - f(net.theta - e)) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(1e-6, abs(fd) + abs(grad[i])))
    return [_check("network gradients vs finite differences", worst, tol)]


def check_monotonicity_statistical(cfg: ExperimentConfig) -> list[CheckResult]:
    """QLBS price of a fixed noisy policy rises with friction, within 2 standard errors."""
    params = MarketParams(mu=cfg.market.mu, sigma=cfg.market.sigma, r=cfg.market.r, n_steps=28)
    policy = ConstantPolicy(0.5, 0.1)
    prices, errs = [], []
    for k, eps in enumerate((0.0, 0.005, 0.01)):
        est = qlbs_price(policy, QlbsConfig(params, acc.CostSpec(eps), 0.0, 1.0, 256), 4, seed=100 + k)
        prices.append(est.price)
        errs.append(est.stderr)
    worst = max(prices[k] - prices[k + 1] - 2 * math.hypot(errs[k], errs[k + 1]) for k in range(2))
    return [CheckResult("QLBS price non-decreasing in epsilon (independent seeds)", "statistical", worst <= 0,
                        worst, 0.0, f"prices {np.round(prices, 6).tolist()}")]


def run_suite(cfg: ExperimentConfig | None = None, statistical: bool = True, **overrides) -> list[CheckResult]:
    cfg = cfg or ExperimentConfig()
    out = []
    out += check_pricers(cfg.seed)
    out += check_accounting(cfg.seed, **overrides)
    out += check_qlbs_structure(cfg.seed)
    out += check_gradients(cfg.seed)
    if statistical:
        out += check_monotonicity_statistical(cfg)
    return out

