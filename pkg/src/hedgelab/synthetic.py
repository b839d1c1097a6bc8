"""Synthetic option chains priced by Black-Scholes on a simulated spot path."""

from __future__ import annotations

import datetime as dt
import math


from .data_io import ChainRow
from .market import MarketParams, simulate_paths
from .pricers import bs_call


def business_days(start: str, n: int) -> list[str]:
    d = dt.date.fromisoformat(start)
    out = []
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += dt.timedelta(days=1)
    return out


def synthetic_chain(start: str = "2020-01-02", n_days: int = 80, sigma: float = 0.2, r: float = 0.02,
                    mu: float = 0.05, s0: float = 100.0, moneyness=(0.9, 0.95, 0.97, 1.0, 1.03, 1.05, 1.1),
                    expiry_every: int = 5, n_entry_days: int | None = None, asset: str = "SYN",
                    seed: int = 0) -> list[ChainRow]:
    """Daily chain on a GBM spot path, every quote at BS(sigma).

    Expiries fall on every ``expiry_every``-th business day.  Each day lists
    calls on every expiry 1 to 90 calendar days ahead (so the 3-70 day filter
    has work to do), with strikes rounded to 0.5 around the day's forward.
    Quotes are only listed on the first ``n_entry_days`` days; later days
    carry the spot alone through a single far expiry, so the realized path
    can be read off the chain.
    """
    dates = business_days(start, n_days)
    params = MarketParams(mu=mu, sigma=sigma, r=r, dt=1 / 252, n_steps=n_days - 1, s0=s0)
    spots = simulate_paths(params, 1, seed).prices[0]
    expiries = business_days(start, n_days + 100)[expiry_every - 1::expiry_every]
    n_entry = n_days if n_entry_days is None else n_entry_days
    rows = []
    for i, (date, spot) in enumerate(zip(dates, spots)):
        d0 = dt.date.fromisoformat(date)
        listed = [e for e in expiries if 1 <= (dt.date.fromisoformat(e) - d0).days <= 90]
        if i >= n_entry:
            listed = listed[-1:]
        for e in listed:
            tau = (dt.date.fromisoformat(e) - d0).days / 365.0
            fwd = spot * math.exp(r * tau)
            strikes = sorted({round(2 * m * fwd) / 2 for m in moneyness})
            for k in strikes:
                mid = float(bs_call(spot, k, tau, r, sigma))
                if mid <= 1e-8:
                    continue
                rows.append(ChainRow(date, asset, e, float(k), mid, float(spot), r))
    return rows
