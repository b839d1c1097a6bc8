"""Experiment drivers shared by the command line and the demos."""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import calibration as cal
from .backtest import (HedgePlan, bs_delta_source, equal_day_aggregate, metrics, numeric_delta_source,
                       policy_delta_source, run_hedge, select_strike)
from .config import ExperimentConfig, content_hash
from .data_io import ReportRow, SeriesPoint, group_by_day
from .learner import TrainedModel, load_checkpoint, save_checkpoint, train
from .market import MarketParams
from .pricers import EuroCall, JDParams, SVParams, bs_price, jd_price, sv_price
from .qlbs import QlbsConfig, qlbs_price
from .rlop import RlopConfig, optimal_wealth, rlop_price
from .seeding import derive_seed

SWEEP_PARAMS = ("sigma", "mu", "lambda", "epsilon")


# --- training and pricing -----------------------------------------------------


def checkpoint_key(cfg: ExperimentConfig, env: str) -> str:
    return content_hash(env, cfg.env_config(env), cfg.train_config())


def train_cached(cfg: ExperimentConfig, env: str, cache_dir=None) -> tuple[TrainedModel, bool]:
    """Train, or load the checkpoint cached under the config's content hash."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"{env}-{checkpoint_key(cfg, env)}.json"
        if path.exists():
            return load_checkpoint(path), True
    model = train(env, cfg.env_config(env), cfg.train_config())
    if path is not None:
        save_checkpoint(model, path)
    return model, False


@dataclass(frozen=True)
class PricePoint:
    env: str
    price: float
    stderr: float
    status: str


def evaluate_price(model: TrainedModel, cfg: ExperimentConfig) -> PricePoint:
    """QLBS: Monte-Carlo price on evaluation paths shared by every run.

    RLOP: the learned initial wealth for the final expiry.
    """
    eval_seed = derive_seed(cfg.pricing.seed_offset)
    if model.env_kind == "qlbs":
        est = qlbs_price(model.policy_obj(), model.env_cfg, cfg.pricing.n_batches, eval_seed)
        return PricePoint("qlbs", est.price, est.stderr, "ok")
    penalty = model.loss_curve[-1]["mean_reward"] if model.loss_curve else math.nan
    res = rlop_price(model.policy_obj(), model.wealth, model.env_cfg, final_penalty=penalty)
    return PricePoint("rlop", res.price, math.nan, res.status)


def with_param(cfg: ExperimentConfig, param: str, value: float) -> ExperimentConfig:
    if param == "sigma":
        return dataclasses.replace(cfg, market=dataclasses.replace(cfg.market, sigma=value))
    if param == "mu":
        return dataclasses.replace(cfg, market=dataclasses.replace(cfg.market, mu=value))
    if param == "lambda":
        return dataclasses.replace(cfg, qlbs=dataclasses.replace(cfg.qlbs, lam=value))
    if param == "epsilon":
        return dataclasses.replace(cfg, cost=dataclasses.replace(cfg.cost, epsilon=value))
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


@dataclass(frozen=True)
class SweepRun:
    env: str
    parameter: float
    seed: int
    price: float
    stderr: float
    cache_hit: bool


def sweep(cfg: ExperimentConfig, param: str, grid, cache_dir=None, envs=None) -> tuple[list[SeriesPoint], list[SweepRun]]:
    """Train (or reuse) one model per (env, grid point, seed) and price it.

    Each grid point reports the mean price over seeds.  Its standard error
    is the spread across seeds when there are several, else the Monte-Carlo
    error of the single run.
    """
    envs = tuple(envs or cfg.sweep.envs)
    if param == "lambda":
        envs = tuple(e for e in envs if e == "qlbs")  # RLOP has no risk-aversion knob
    runs = []
    points = []
    for env in envs:
        for x in grid:
            prices, errs = [], []
            for k in range(cfg.sweep.n_seeds):
                c = dataclasses.replace(with_param(cfg, param, float(x)), seed=cfg.seed + k)
                model, hit = train_cached(c, env, cache_dir)
                pp = evaluate_price(model, c)
                runs.append(SweepRun(env, float(x), c.seed, pp.price, pp.stderr, hit))
                prices.append(pp.price)
                errs.append(pp.stderr)
            n = len(prices)
            if n > 1:
                se = float(np.std(prices, ddof=1) / math.sqrt(n))
            else:
                se = float(errs[0])
            points.append(SeriesPoint(float(x), float(np.mean(prices)), se, env))
    return points, runs


# --- price tables for the RL sigma fits ----------------------------------------


def rl_price_table(model: TrainedModel, section, r: float, cost, seed: int = 0) -> cal.PriceTable:
    """Prices of a trained policy, held fixed, on a (sigma, K/F, bucket) grid.

    QLBS prices come from the value estimate on fresh paths; RLOP prices
    are the best initial wealth for the policy at that grid point.  Both
    are per unit spot with mu = r.
    """
    pol = model.policy_obj()
    env = model.env_cfg
    n_paths = section.n_paths

    def price(sigma, moneyness, tau):
        n_steps = max(1, int(round(tau * 252)))
        out = np.empty(len(moneyness))
        for j, m in enumerate(moneyness):
            p = MarketParams.from_maturity(tau, n_steps, mu=r, sigma=sigma, r=r, s0=1.0)
            strike = float(m * math.exp(r * tau))
            s = derive_seed(seed, j)
            if model.env_kind == "qlbs":
                qc = QlbsConfig(p, cost, env.lam, strike, max(2, n_paths))
                out[j] = qlbs_price(pol, qc, 1, s).price
            else:
                rc = RlopConfig(p, cost, strike, env.penalty_kind, n_paths)
                out[j] = optimal_wealth(pol, rc, s)
        return out

    return cal.build_price_table(model.env_kind, price, section.sigmas, section.moneyness)


# --- calibration over a chain ------------------------------------------------


def fit_config(cfg: ExperimentConfig) -> cal.FitConfig:
    c = cfg.calibration
    return cal.FitConfig(n_starts=c.n_starts, seed=cfg.seed,
                         max_evals={"bs": c.max_evals_bs, "jd": c.max_evals_jd, "sv": c.max_evals_sv})


def periods_of(date: str, periods: dict) -> list[str]:
    if not periods:
        return ["all"]
    return sorted(name for name, (lo, hi) in periods.items() if lo <= date <= hi)


@dataclass
class ChainSummary:
    report: list[ReportRow]
    fits: list[dict]  # per-day records
    skipped: dict


def calibrate_chain(rows, cfg: ExperimentConfig, tables: dict | None = None) -> ChainSummary:
    """Per-day, per-bucket fits and the equal-day IVRMSE per cell."""
    tables = tables or {}
    spec = cfg.calibration.bucket_spec()
    fcfg = fit_config(cfg)
    cells = defaultdict(list)
    fits, skipped = [], defaultdict(int)
    for (date, asset), day_rows in group_by_day(rows).items():
        for bucket in spec.centers:
            slc = cal.bucket_slice(day_rows, bucket, spec)
            if slc.empty:
                skipped["empty_slice"] += 1
                continue
            res = cal.calibrate_slice(slc, cfg.calibration.models, fcfg)
            for env, table in sorted(tables.items()):
                res[env] = cal.fit_rl_sigma(slc, table)
            for model, fit in sorted(res.items()):
                fits.append({"date": date, "asset": asset, "bucket": bucket, "model": model, "status": fit.status,
                             "params": fit.params, "objective": fit.objective, "ivrmse_1e3": fit.ivrmse_1e3,
                             "n_quotes": fit.n_quotes, "n_dropped": slc.n_dropped})
                if fit.status not in ("ok", "boundary") or not math.isfinite(fit.ivrmse_1e3):
                    skipped[f"{model}_{fit.status}"] += 1
                    continue
                for period in periods_of(date, cfg.calibration.periods):
                    cells[(asset, period, f"{bucket}d", model)].append(fit.ivrmse_1e3)
    report = [
        ReportRow(cfg.experiment, asset, period, bucket, "all", model, "ivrmse_1e3",
                  math.fsum(v) / len(v), len(v))
        for (asset, period, bucket, model), v in sorted(cells.items())
    ]
    return ChainSummary(report, fits, dict(sorted(skipped.items())))


# --- backtest over a chain ---------------------------------------------------


def _parametric_price_fn(model: str, params: dict):
    if model == "bs":
        return lambda o: bs_price(o, params["sigma"])
    if model == "jd":
        p = JDParams(**params)
        return lambda o: jd_price(o, p)
    if model == "sv":
        p = SVParams(**params)
        return lambda o: sv_price(o, p)
    raise ValueError(model)


def backtest_chain(rows, cfg: ExperimentConfig, policies: dict | None = None,
                   tables: dict | None = None) -> ChainSummary:
    """Delta-hedge one short call per (day, bucket, moneyness group, model).

    The hedge runs on the chain's own spot series from entry to expiry.
    The option is the listed expiry closest to the bucket center, and the
    strike is the one nearest the group's K/F target.
    """
    policies = policies or {}
    tables = tables or {}
    bt = cfg.backtest
    spec = cfg.calibration.bucket_spec()
    fcfg = fit_config(cfg)
    spots = defaultdict(dict)
    for r in rows:
        spots[r.asset][r.date] = r.spot
    dates = {a: sorted(d) for a, d in spots.items()}

    param_models = [m for m in bt.models if m in ("bs", "jd", "sv")]
    rl_models = [m for m in bt.models if m in ("qlbs", "rlop") and m in policies]
    cells = defaultdict(list)
    records, skipped = [], defaultdict(int)
    for m in bt.models:
        if m in ("qlbs", "rlop") and m not in policies:
            skipped[f"{m}_no_checkpoint"] += 1

    days = group_by_day(rows)
    fit_cache = {}

    def day_fits(date, asset, bucket):
        key = (date, asset, bucket)
        if key not in fit_cache:
            slc = cal.bucket_slice(days[(date, asset)], bucket, spec) if (date, asset) in days else None
            if slc is None or slc.empty:
                fit_cache[key] = (slc, {})
            else:
                fits = cal.calibrate_slice(slc, param_models, fcfg) if param_models else {}
                if "bs" not in fits:
                    fits["bs"] = cal.fit_parametric(slc, "bs", fcfg)
                fit_cache[key] = (slc, fits)
        return fit_cache[key]

    for (date, asset), day_rows in days.items():
        for bucket in spec.centers:
            slc, fits = day_fits(date, asset, bucket)
            if slc.empty:
                skipped["empty_slice"] += 1
                continue
            # the listed maturity nearest the bucket center
            dte = np.rint(slc.taus * cal.DAYS_PER_YEAR).astype(int)
            tau = float(slc.taus[int(np.argmin(np.abs(dte - bucket)))])
            expiry = _add_days(date, int(round(tau * cal.DAYS_PER_YEAR)))
            path_dates = [d for d in dates[asset] if date <= d <= expiry]
            if not path_dates or path_dates[-1] != expiry:
                skipped["missing_path_dates"] += 1
                continue
            path = np.array([spots[asset][d] for d in path_dates])
            sel = slc.taus == tau
            fwd = slc.spot * math.exp(slc.rate * tau)
            for group, target in sorted(bt.moneyness_groups.items()):
                strike = select_strike(slc.strikes[sel], fwd, target)
                mid = float(slc.mids[sel][slc.strikes[sel] == strike][0])
                opt = EuroCall(strike, tau, slc.spot, slc.rate)
                n_steps = len(path) - 1
                for model in param_models + rl_models:
                    premium = mid
                    if model in param_models:
                        fit = fits[model]
                        if fit.status != "ok":
                            skipped[f"{model}_fit_{fit.status}"] += 1
                            continue
                        price_fn = _parametric_price_fn(model, fit.params)
                        if bt.premium_source == "model":
                            premium = float(price_fn(opt))
                        src = _delta_source(model, fit.params, strike, slc.rate)
                    else:
                        sigma = fits["bs"].params.get("sigma", 0.2)
                        if model in tables:
                            rl_fit = cal.fit_rl_sigma(slc, tables[model])
                            sigma = rl_fit.params.get("sigma", sigma)
                        pol_env = policies[model].env_cfg.params
                        mu = slc.rate if bt.drift == "risk_neutral" else pol_env.mu
                        fparams = MarketParams.from_maturity(tau, n_steps, mu=mu, sigma=sigma, r=slc.rate,
                                                             s0=slc.spot)
                        src = policy_delta_source(policies[model].policy_obj(), strike, fparams)
                    if premium <= 0:
                        skipped[f"{model}_nonpositive_premium"] += 1
                        continue
                    variants = [(model, src)]
                    if bt.refit_daily and model in param_models:
                        variants.append((f"{model}_refit", _refit_delta_source(
                            model, strike, slc.rate, path_dates, expiry, asset, fits[model].params, spec, day_fits)))
                    for tag, source in variants:
                        plan = HedgePlan(tag, strike, tau, premium, slc.rate, date, cfg.cost)
                        out = run_hedge(plan, path, source)
                        records.append({"date": date, "asset": asset, "bucket": bucket, "group": group,
                                        "model": tag, "strike": strike, "tau": tau, "premium": premium,
                                        "pi_T": out.pi_T, "cost": out.total_cost, "turnover": out.turnover})
                        day = metrics([out.pi_T], [out.total_cost])
                        for period in periods_of(date, cfg.calibration.periods):
                            cells[(asset, period, f"{bucket}d", group, tag)].append(day)
    report = []
    for (asset, period, bucket, group, model), per_day in sorted(cells.items()):
        agg = equal_day_aggregate(per_day)
        for metric in ("hedging_rmse", "avg_trading_cost", "shortfall_prob"):
            report.append(ReportRow(cfg.experiment, asset, period, bucket, group, model, metric,
                                    getattr(agg, metric), len(per_day)))
    return ChainSummary(report, records, dict(sorted(skipped.items())))


def _delta_source(model: str, params: dict, strike: float, rate: float):
    if model == "bs":
        return bs_delta_source(params["sigma"], strike, rate)
    return numeric_delta_source(_parametric_price_fn(model, params), strike, rate)


def _refit_delta_source(model, strike, rate, path_dates, expiry, asset, entry_params, spec, day_fits):
    """Deltas from each day's own calibration in the bucket of the remaining maturity.

    Days without a usable fit keep the most recent parameters.
    """
    params_by_t = []
    current = entry_params
    for d in path_dates[:-1]:
        bucket = spec.bucket_of((dt.date.fromisoformat(expiry) - dt.date.fromisoformat(d)).days)
        if bucket is not None:
            _, fits = day_fits(d, asset, bucket)
            fit = fits.get(model)
            if fit is not None and fit.status == "ok":
                current = fit.params
        params_by_t.append(current)

    def delta(t, spot, tau):
        return _delta_source(model, params_by_t[t], strike, rate)(t, spot, tau)
    return delta


def _add_days(date: str, days: int) -> str:
    return (dt.date.fromisoformat(date) + dt.timedelta(days=days)).isoformat()
