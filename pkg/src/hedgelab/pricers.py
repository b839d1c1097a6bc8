"""Black-Scholes, Merton jump-diffusion and Heston call pricers.

Prices are for European calls on a non-dividend underlying.  ``bs_price``
and ``bs_delta`` broadcast over numpy arrays; the jump and stochastic
volatility pricers accept array strikes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtr, pdtrc


class NumericalError(ArithmeticError):
    """A series or quadrature failed to converge."""


@dataclass(frozen=True)
class EuroCall:
    strike: float
    tau: float
    spot: float
    r: float = 0.0

    def __post_init__(self):
        if not (np.all(np.asarray(self.strike) > 0) and self.tau > 0 and self.spot > 0):
            raise ValueError(f"invalid option: {self}")

    def with_spot(self, spot: float) -> "EuroCall":
        return replace(self, spot=spot)

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.tau)

    @property
    def forward(self) -> float:
        return self.spot * math.exp(self.r * self.tau)

    def lower_bound(self):
        return np.maximum(self.spot - np.asarray(self.strike) * self.discount, 0.0)


@dataclass(frozen=True)
class JDParams:
    sigma: float
    jump_intensity: float = 0.0
    jump_mean: float = 0.0
    jump_vol: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.jump_intensity < 0 or self.jump_vol < 0:
            raise ValueError(f"invalid jump-diffusion parameters: {self}")


@dataclass(frozen=True)
class SVParams:
    v0: float
    kappa: float
    theta: float
    xi: float
    rho: float = 0.0

    def __post_init__(self):
        if not (self.v0 > 0 and self.kappa > 0 and self.theta > 0 and self.xi >= 0 and -1 <= self.rho <= 1):
            raise ValueError(f"invalid Heston parameters: {self}")


# --- Black-Scholes -------------------------------------------------------


def _bs(spot, strike, tau, r, sigma):
    spot, strike, tau, r, sigma = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, tau, r, sigma))
    )
    disc_k = strike * np.exp(-r * tau)
    vol = sigma * np.sqrt(tau)
    out = np.array(np.maximum(spot - disc_k, 0.0))
    live = vol > 0
    if np.any(live):
        v = vol[live]
        d1 = (np.log(spot[live] / disc_k[live])) / v + 0.5 * v
        out[live] = spot[live] * ndtr(d1) - disc_k[live] * ndtr(d1 - v)
    return out


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def bs_price(opt: EuroCall, sigma):
    if np.any(np.asarray(sigma) < 0):
        raise ValueError("sigma must be >= 0")
    return _scalar(_bs(opt.spot, opt.strike, opt.tau, opt.r, sigma))


def bs_call(spot, strike, tau, r, sigma):
    """Array form of the Black-Scholes call, no validation."""
    return _bs(spot, strike, tau, r, sigma)


def bs_delta_array(spot, strike, tau, r, sigma):
    spot, strike, tau, r, sigma = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, tau, r, sigma))
    )
    vol = sigma * np.sqrt(np.maximum(tau, 0.0))
    disc_k = strike * np.exp(-r * tau)
    out = np.array((spot > disc_k).astype(float))
    live = vol > 0
    if np.any(live):
        v = vol[live]
        out[live] = ndtr(np.log(spot[live] / disc_k[live]) / v + 0.5 * v)
    return out


def bs_delta(opt: EuroCall, sigma):
    return _scalar(bs_delta_array(opt.spot, opt.strike, opt.tau, opt.r, sigma))


def bs_vega(opt: EuroCall, sigma):
    v = sigma * math.sqrt(opt.tau)
    d1 = np.log(opt.spot / (np.asarray(opt.strike) * opt.discount)) / v + 0.5 * v
    return _scalar(opt.spot * math.sqrt(opt.tau) * stats.norm.pdf(d1))


# --- Merton jump-diffusion -----------------------------------------------

JD_TAIL_TOL = 1e-12
JD_MAX_TERMS = 200


def jd_price(opt: EuroCall, p: JDParams):
    """Merton series: Poisson mixture of Black-Scholes prices."""
    if p.jump_intensity == 0.0:
        return bs_price(opt, p.sigma)
    kbar = math.exp(p.jump_mean + 0.5 * p.jump_vol**2) - 1.0
    lam_tau = p.jump_intensity * (1.0 + kbar) * opt.tau
    log_lam = math.log(lam_tau)
    total = 0.0
    n = 0
    while True:
        if n > JD_MAX_TERMS:
            raise NumericalError(f"Merton series not converged after {JD_MAX_TERMS} terms")
        sigma_n = math.sqrt(p.sigma**2 + n * p.jump_vol**2 / opt.tau)
        r_n = opt.r - p.jump_intensity * kbar + n * math.log1p(kbar) / opt.tau
        weight = math.exp(n * log_lam - lam_tau - math.lgamma(n + 1))
        total = total + weight * _bs(opt.spot, opt.strike, opt.tau, r_n, sigma_n)
        if pdtrc(n, lam_tau) < JD_TAIL_TOL:
            break
        n += 1
    return _scalar(total)


# --- Heston ----------------------------------------------------------------

SV_ABS_TOL = 1e-8
SV_TAIL_TOL = 1e-10


def _clog1p(w):
    # numpy's complex log1p loses precision near zero
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < 1e-4
    series = w * (1.0 - w * (0.5 - w * (1.0 / 3.0 - 0.25 * w)))
    return np.where(small, series, np.log(1.0 + np.where(small, 0.0, w)))


def heston_cf(u, tau: float, r: float, p: SVParams, spot: float = 1.0):
    """E[exp(i u log S_tau)] under the risk-neutral Heston dynamics.

    Uses the rotation-free form of the characteristic exponent, which stays
    on the principal branch of the complex logarithm.
    """
    u = np.asarray(u, dtype=complex)
    iu = 1j * u
    drift = iu * (math.log(spot) + r * tau)
    if p.xi == 0.0:
        # deterministic variance path
        w = p.theta * tau + (p.v0 - p.theta) * (1.0 - math.exp(-p.kappa * tau)) / p.kappa
        return np.exp(drift - 0.5 * w * (iu + u * u))
    beta = p.kappa - p.rho * p.xi * iu
    q = iu + u * u
    d = np.sqrt(beta * beta + p.xi**2 * q)
    # beta - d rewritten without cancellation, so small xi stays accurate
    beta_minus_d = -(p.xi**2) * q / (beta + d)
    g = beta_minus_d / (beta + d)
    e = np.exp(-d * tau)
    log_ratio = _clog1p(g * (1.0 - e) / (1.0 - g))
    big_c = p.kappa * p.theta * (-q * tau / (beta + d) - 2.0 * log_ratio / p.xi**2)
    big_d = -q / (beta + d) * (1.0 - e) / (1.0 - g * e)
    return np.exp(drift + big_c + big_d * p.v0)


# Gauss-Kronrod 7/15 rule on [-1, 1]
_K15_X = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_K15_W = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_G7_W = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                  0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
_NODES = np.concatenate([-_K15_X[:-1], _K15_X[::-1]])
_WK = np.concatenate([_K15_W[:-1], _K15_W[::-1]])
_WG = np.zeros(15)
_WG[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_G7_W[:-1], _G7_W[::-1]])


def _gk_panels(integrand, a: np.ndarray, b: np.ndarray):
    """Kronrod estimates and error bounds for each panel [a_j, b_j]."""
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    u = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    f = integrand(u).reshape(len(a), 15, -1)
    k = half[:, None] * np.einsum("i,pis->ps", _WK, f)
    g = half[:, None] * np.einsum("i,pis->ps", _WG, f)
    return k, np.abs(k - g)


def _adaptive(integrand, upper0: float = 200.0, tol: float = SV_ABS_TOL * 1e-2, max_rounds: int = 60):
    """Globally adaptive Gauss-Kronrod on [0, upper0], then tail panels.

    ``integrand`` maps a 1-d array of abscissae to an array of shape
    (len(u), n).  Panels whose error exceeds their share of ``tol`` are
    bisected; the range is then extended by doubling panels until one adds
    less than the tail tolerance.
    """
    edges = np.linspace(0.0, upper0, 9)
    a, b = edges[:-1], edges[1:]
    done, err_done = 0.0, 0.0
    for _ in range(max_rounds):
        k, e = _gk_panels(integrand, a, b)
        if not np.all(np.isfinite(k)):
            raise NumericalError("Heston integral is not finite")
        share = tol * (b - a) / upper0
        ok = np.all(e <= share[:, None], axis=1)
        done = done + k[ok].sum(axis=0)
        err_done = err_done + e[ok].sum(axis=0)
        if ok.all():
            break
        a, b = a[~ok], b[~ok]
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
    else:
        raise NumericalError("Heston quadrature did not converge")
    val = done
    lo, width = upper0, upper0
    for _ in range(20):
        tail = _adaptive_panel(integrand, lo, lo + width)
        val = val + tail
        if np.max(np.abs(tail)) < SV_TAIL_TOL:
            break
        lo += width
        width *= 2
    else:
        raise NumericalError("Heston integral tail did not decay")
    if np.max(err_done) > 10 * SV_ABS_TOL:
        raise NumericalError(f"Heston quadrature error estimate {np.max(err_done):.3g}")
    return val


def _adaptive_panel(integrand, lo: float, hi: float):
    edges = np.linspace(lo, hi, 9)
    k, e = _gk_panels(integrand, edges[:-1], edges[1:])
    return k.sum(axis=0)


def sv_price(opt: EuroCall, p: SVParams):
    """Heston call by the single-integral (Lewis) representation.

        C = S - sqrt(S K) e^{-r tau / 2} / pi * int_0^inf Re[e^{i u k} phi(u - i/2)] / (u^2 + 1/4) du

    with k = log(S/K) + r tau and phi the characteristic function of
    log(S_tau / S) - r tau.
    """
    strike = np.atleast_1d(np.asarray(opt.strike, dtype=float))
    k = np.log(opt.spot / strike) + opt.r * opt.tau

    def integrand(u):
        phi = heston_cf(u - 0.5j, opt.tau, 0.0, p)[:, None]
        return np.real(np.exp(1j * u[:, None] * k[None, :]) * phi) / (u * u + 0.25)[:, None]

    integral = _adaptive(integrand)
    price = opt.spot - np.sqrt(opt.spot * strike) * math.exp(-0.5 * opt.r * opt.tau) / math.pi * integral
    price = np.clip(price, opt.lower_bound(), opt.spot)
    return _scalar(price.reshape(np.shape(opt.strike)))


def sv_put(opt: EuroCall, p: SVParams):
    """Heston put from the two Gil-Pelaez exercise probabilities.

    Independent of ``sv_price``'s integral, so put-call parity between the
    two is a genuine check.
    """
    strike = np.atleast_1d(np.asarray(opt.strike, dtype=float))
    log_k = np.log(strike)
    fwd_cf_at_minus_i = heston_cf(-1j, opt.tau, opt.r, p, opt.spot)

    def integrand(u):
        u = np.maximum(u, 1e-12)
        phi = heston_cf(u, opt.tau, opt.r, p, opt.spot)[:, None]
        phi_shift = heston_cf(u - 1j, opt.tau, opt.r, p, opt.spot)[:, None] / fwd_cf_at_minus_i
        kern = np.exp(-1j * u[:, None] * log_k[None, :]) / (1j * u[:, None])
        return np.concatenate([np.real(kern * phi_shift), np.real(kern * phi)], axis=1)

    vals = _adaptive(integrand)
    n = strike.size
    p1 = 0.5 + vals[:n] / math.pi
    p2 = 0.5 + vals[n:] / math.pi
    put = strike * opt.discount * (1.0 - p2) - opt.spot * (1.0 - p1)
    return _scalar(put.reshape(np.shape(opt.strike)))


# --- implied volatility and numeric deltas --------------------------------

IV_MAX = 10.0


def implied_vol(opt: EuroCall, price: float) -> float:
    """Black-Scholes implied volatility by bisection then Newton polish.

    Raises ValueError when the price is outside the no-arbitrage band; a
    price at the intrinsic bound maps to zero volatility.
    """
    lower = float(opt.lower_bound())
    tol = 1e-10 * opt.spot
    if not math.isfinite(price) or price < lower - tol or price >= opt.spot:
        raise ValueError(f"price {price} outside no-arbitrage bounds [{lower}, {opt.spot})")
    if price <= lower + tol:
        return 0.0

    def f(s):
        return float(_bs(opt.spot, opt.strike, opt.tau, opt.r, s)) - price

    lo, hi = 0.0, 1.0
    while f(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > IV_MAX:
            raise ValueError(f"implied vol above {IV_MAX}")
    # bisection until Newton is safe, then polish inside the bracket until the
    # step is negligible; stopping on the price tolerance alone leaves sigma
    # loose where vega is small
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-3:
            break
    sig = 0.5 * (lo + hi)
    for _ in range(100):
        fs = f(sig)
        if fs == 0.0:
            return sig
        if fs < 0:
            lo = sig
        else:
            hi = sig
        vega = float(bs_vega(opt, sig)) if sig > 0 else 0.0
        step = sig - fs / vega if vega > 0 else -1.0
        new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(new - sig) <= 1e-14 * max(1.0, sig) or hi - lo < 1e-15:
            sig = new
            break
        sig = new
    if abs(f(sig)) > tol:
        raise NumericalError(f"implied vol did not converge for price {price}")
    return sig


def numeric_delta(price_fn: Callable[[EuroCall], float], opt: EuroCall, h_rel: float = 1e-4) -> float:
    """Central finite difference of ``price_fn`` in the spot."""
    h = h_rel * opt.spot
    up = price_fn(opt.with_spot(opt.spot + h))
    down = price_fn(opt.with_spot(opt.spot - h))
    return _scalar((np.asarray(up) - np.asarray(down)) / (2 * h))
