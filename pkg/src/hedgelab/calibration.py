"""Daily cross-section calibration and the IVRMSE diagnostic.

Quotes are bucketed by calendar days to expiry into 3-21, 21-42 and 42-70
day intervals (left-closed, the last one closed), labelled by their
centers 14, 28 and 56.  Parametric models are fitted in price space.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.interpolate import PchipInterpolator

from .market import philox_generator
from .pricers import EuroCall, JDParams, SVParams, bs_call, implied_vol, jd_price, sv_price

DAYS_PER_YEAR = 365.0
STREAM_FIT = 3


@dataclass(frozen=True)
class BucketSpec:
    centers: tuple[int, ...] = (14, 28, 56)
    edges: tuple[int, ...] = (3, 21, 42, 70)

    def __post_init__(self):
        if len(self.edges) != len(self.centers) + 1 or list(self.edges) != sorted(self.edges):
            raise ValueError("edges must be sorted with one more entry than centers")

    def bucket_of(self, dte: int) -> int | None:
        """Center of the bucket holding ``dte`` calendar days, or None."""
        if dte < self.edges[0] or dte > self.edges[-1]:
            return None
        for c, hi in zip(self.centers, self.edges[1:]):
            if dte < hi:
                return c
        return self.centers[-1]


@dataclass
class OptionSlice:
    date: str
    asset: str
    bucket: int
    spot: float
    rate: float
    strikes: np.ndarray
    taus: np.ndarray
    mids: np.ndarray
    market_iv: np.ndarray
    n_dropped: int = 0  # quotes outside the no-arbitrage band

    @property
    def n_quotes(self) -> int:
        return len(self.strikes)

    @property
    def empty(self) -> bool:
        return self.n_quotes == 0

    @property
    def forwards(self) -> np.ndarray:
        return self.spot * np.exp(self.rate * self.taus)

    @property
    def moneyness(self) -> np.ndarray:
        return self.strikes / self.forwards


def _days_between(date: str, expiry: str) -> int:
    return (dt.date.fromisoformat(expiry) - dt.date.fromisoformat(date)).days


def bucket_slice(rows, bucket: int, buckets: BucketSpec = BucketSpec()) -> OptionSlice:
    """Quotes of one day and asset that fall in the bucket centered at ``bucket``.

    ``rows`` is any sequence of objects with date, asset, expiry, strike,
    call_mid, spot and rate attributes, all from the same day and asset.
    """
    if bucket not in buckets.centers:
        raise ValueError(f"unknown bucket {bucket}; choose from {buckets.centers}")
    rows = list(rows)
    if not rows:
        raise ValueError("no rows for this day")
    keys = {(r.date, r.asset) for r in rows}
    if len(keys) != 1:
        raise ValueError(f"rows span several days or assets: {sorted(keys)}")
    spots = {r.spot for r in rows}
    rates = {r.rate for r in rows}
    if len(spots) != 1 or len(rates) != 1:
        raise ValueError("spot and rate must be constant within a day")
    (date, asset), spot, rate = keys.pop(), spots.pop(), rates.pop()

    strikes, taus, mids, ivs = [], [], [], []
    dropped = 0
    for r in rows:
        dte = _days_between(r.date, r.expiry)
        if buckets.bucket_of(dte) != bucket:
            continue
        tau = dte / DAYS_PER_YEAR
        try:
            iv = implied_vol(EuroCall(r.strike, tau, spot, rate), r.call_mid)
        except ValueError:
            dropped += 1
            continue
        strikes.append(r.strike)
        taus.append(tau)
        mids.append(r.call_mid)
        ivs.append(iv)
    arr = lambda x: np.asarray(x, dtype=float)  # noqa: E731
    return OptionSlice(date, asset, bucket, spot, rate, arr(strikes), arr(taus), arr(mids), arr(ivs), dropped)


# --- model prices over a slice ----------------------------------------------


def _by_tau(slc: OptionSlice, price_one_tau) -> np.ndarray:
    """Apply an array-strike pricer once per distinct maturity."""
    out = np.empty(slc.n_quotes)
    for tau in np.unique(slc.taus):
        sel = slc.taus == tau
        out[sel] = price_one_tau(EuroCall(slc.strikes[sel], float(tau), slc.spot, slc.rate))
    return out


def model_prices(slc: OptionSlice, model: str, params: dict) -> np.ndarray:
    if model == "bs":
        return bs_call(slc.spot, slc.strikes, slc.taus, slc.rate, params["sigma"])
    if model == "jd":
        p = JDParams(**params)
        return _by_tau(slc, lambda o: jd_price(o, p))
    if model == "sv":
        p = SVParams(**params)
        return _by_tau(slc, lambda o: sv_price(o, p))
    raise ValueError(f"unknown model {model!r}")


# --- parametric fits --------------------------------------------------------

BOUNDS = {
    "bs": {"sigma": (0.01, 3.0)},
    "jd": {"sigma": (0.01, 3.0), "jump_intensity": (0.0, 5.0), "jump_mean": (-1.0, 1.0), "jump_vol": (0.0, 2.0)},
    "sv": {"v0": (1e-4, 4.0), "kappa": (1e-3, 20.0), "theta": (1e-4, 4.0), "xi": (0.0, 5.0), "rho": (-0.99, 0.99)},
}


@dataclass
class FitResult:
    model: str
    params: dict
    objective: float  # sum of squared price errors
    converged: bool
    ivrmse_1e3: float = float("nan")
    status: str = "ok"  # ok | empty | nonconverged | boundary
    n_quotes: int = 0
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FitConfig:
    n_starts: int = 5
    seed: int = 0
    max_evals: dict = field(default_factory=lambda: {"bs": 400, "jd": 1500, "sv": 800})
    xatol: float = 1e-10
    fatol: float = 1e-18


def _sse(slc, model, names, x) -> float:
    try:
        resid = model_prices(slc, model, dict(zip(names, x))) - slc.mids
    except (ValueError, ArithmeticError):
        return math.inf
    out = float(resid @ resid)
    return out if math.isfinite(out) else math.inf


def _anchor_start(slc: OptionSlice, model: str, sigma_bs: float | None) -> list[float]:
    """A start at which JD and SV reproduce the BS fit exactly."""
    s = sigma_bs if sigma_bs is not None else float(np.median(slc.market_iv)) if slc.n_quotes else 0.2
    s = float(np.clip(s, 0.01, 3.0))
    if model == "bs":
        return [s]
    if model == "jd":
        return [s, 0.0, 0.0, 0.0]
    return [s * s, 1.0, s * s, 0.0, 0.0]


def fit_parametric(slc: OptionSlice, model: str, cfg: FitConfig = FitConfig(),
                   sigma_bs: float | None = None) -> FitResult:
    """Least squares in price space by bounded Nelder-Mead from several starts.

    The first start is the BS-nesting point (built from ``sigma_bs`` when
    given), so JD and SV fits never end worse than the BS fit.  The other
    starts are uniform draws inside the bounds.
    """
    if model not in BOUNDS:
        raise ValueError(f"unknown model {model!r}")
    if slc.empty:
        return FitResult(model, {}, math.nan, False, status="empty")
    names = list(BOUNDS[model])
    lo = np.array([BOUNDS[model][n][0] for n in names])
    hi = np.array([BOUNDS[model][n][1] for n in names])
    rng = philox_generator(cfg.seed, STREAM_FIT)
    starts = [np.array(_anchor_start(slc, model, sigma_bs))]
    starts += [lo + (hi - lo) * rng.random(len(names)) for _ in range(cfg.n_starts - 1)]

    best = None
    for x0 in starts:
        res = optimize.minimize(
            lambda x: _sse(slc, model, names, x), x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
            options={"maxfev": cfg.max_evals[model], "xatol": cfg.xatol, "fatol": cfg.fatol},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        return FitResult(model, {}, math.nan, False, status="nonconverged", n_quotes=slc.n_quotes)
    params = {n: float(v) for n, v in zip(names, best.x)}
    prices = model_prices(slc, model, params)
    return FitResult(model, params, float(best.fun), bool(best.success),
                     ivrmse(slc, prices).value, "ok", slc.n_quotes)


def calibrate_slice(slc: OptionSlice, models=("bs", "jd", "sv"), cfg: FitConfig = FitConfig()) -> dict[str, FitResult]:
    """Fit BS first and warm-start the nested models from it."""
    out = {}
    bs = fit_parametric(slc, "bs", cfg)
    sigma_bs = bs.params.get("sigma")
    for m in models:
        out[m] = bs if m == "bs" else fit_parametric(slc, m, cfg, sigma_bs)
    return out


# --- IVRMSE -----------------------------------------------------------------


@dataclass(frozen=True)
class IvError:
    value: float  # 1000 * RMSE of implied vols
    n_used: int
    n_dropped: int

    @property
    def status(self) -> str:
        return "ok" if self.n_used else "undefined"


def ivrmse(slc: OptionSlice, prices) -> IvError:
    """1000 * root-mean-square gap between model and market implied vols."""
    prices = np.asarray(prices, dtype=float)
    gaps = []
    for k, tau, price, iv_mkt in zip(slc.strikes, slc.taus, prices, slc.market_iv):
        try:
            gaps.append(implied_vol(EuroCall(k, tau, slc.spot, slc.rate), float(price)) - iv_mkt)
        except ValueError:
            continue
    n_used = len(gaps)
    if not n_used:
        return IvError(math.nan, 0, len(prices))
    return IvError(1000.0 * math.sqrt(float(np.mean(np.square(gaps)))), n_used, len(prices) - n_used)


# --- sigma fits against a trained-model price table -------------------------


@dataclass(frozen=True)
class PriceTable:
    """Model call prices per unit spot on a (sigma, K/F, bucket) grid."""

    model: str
    sigmas: np.ndarray
    moneyness: np.ndarray
    buckets: tuple[int, ...]
    prices: np.ndarray  # (n_sigma, n_moneyness, n_buckets)

    def __post_init__(self):
        shape = (len(self.sigmas), len(self.moneyness), len(self.buckets))
        if np.shape(self.prices) != shape:
            raise ValueError(f"price grid must have shape {shape}")
        if len(self.sigmas) < 2 or np.any(np.diff(self.sigmas) <= 0):
            raise ValueError("sigma grid must be increasing with at least two points")

    def curve(self, moneyness, bucket: int):
        """Monotone cubic in sigma of the prices at the given K/F values."""
        j = self.buckets.index(bucket)
        m = np.asarray(moneyness, dtype=float)
        # linear in K/F, clamped to the grid
        cols = np.stack([np.interp(m, self.moneyness, self.prices[i, :, j]) for i in range(len(self.sigmas))])
        return PchipInterpolator(self.sigmas, cols, axis=0)

    def to_dict(self) -> dict:
        return {"model": self.model, "sigmas": self.sigmas.tolist(), "moneyness": self.moneyness.tolist(),
                "buckets": list(self.buckets), "prices": np.asarray(self.prices).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriceTable":
        return cls(d["model"], np.asarray(d["sigmas"], float), np.asarray(d["moneyness"], float),
                   tuple(d["buckets"]), np.asarray(d["prices"], float))


def build_price_table(model: str, price_fn, sigmas, moneyness, buckets=(14, 28, 56)) -> PriceTable:
    """Tabulate ``price_fn(sigma, moneyness_array, tau_years)`` per unit spot."""
    sigmas = np.asarray(sigmas, dtype=float)
    moneyness = np.asarray(moneyness, dtype=float)
    grid = np.empty((len(sigmas), len(moneyness), len(buckets)))
    for i, s in enumerate(sigmas):
        for j, b in enumerate(buckets):
            grid[i, :, j] = price_fn(float(s), moneyness, b / DAYS_PER_YEAR)
    return PriceTable(model, sigmas, moneyness, tuple(buckets), grid)


def fit_rl_sigma(slc: OptionSlice, table: PriceTable) -> FitResult:
    """Sigma minimizing squared price error against the table.

    The grid point with the smallest error brackets a golden-section
    search; a best point on the grid edge is returned with a boundary flag.
    """
    if slc.empty:
        return FitResult(table.model, {}, math.nan, False, status="empty")
    curve = table.curve(slc.moneyness, slc.bucket)

    def sse(s):
        resid = slc.spot * curve(s) - slc.mids
        return float(resid @ resid)

    errs = np.array([sse(s) for s in table.sigmas])
    k = int(np.argmin(errs))
    if k in (0, len(errs) - 1):
        sigma, status = float(table.sigmas[k]), "boundary"
    else:
        a, b, c = table.sigmas[k - 1:k + 2]
        sigma, status = float(optimize.golden(sse, brack=(a, b, c), tol=1e-10)), "ok"
        if sse(sigma) > errs[k]:
            sigma = float(b)
    prices = slc.spot * curve(sigma)
    return FitResult(table.model, {"sigma": sigma}, sse(sigma), status == "ok",
                     ivrmse(slc, prices).value, status, slc.n_quotes)
