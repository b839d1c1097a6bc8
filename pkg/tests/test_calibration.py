import numpy as np
import pytest

from hedgelab import calibration as cal
from hedgelab.data_io import ChainRow
from hedgelab.pricers import EuroCall, JDParams, bs_call, bs_price, jd_price

FAST = cal.FitConfig(n_starts=2, max_evals={"bs": 300, "jd": 300, "sv": 200})


def _rows(price, date="2021-03-01", spot=100.0, rate=0.01, days=(10, 30, 60), strikes=(90, 95, 100, 105, 110)):
    out = []
    for d in days:
        tau = d / 365.0
        exp = np.datetime64(date) + np.timedelta64(d, "D")
        for k in strikes:
            out.append(ChainRow(date, "X", str(exp), float(k), float(price(spot, k, tau, rate)), spot, rate))
    return out


def test_bucket_edges():
    spec = cal.BucketSpec()
    assert [spec.bucket_of(d) for d in (2, 3, 20, 21, 41, 42, 70, 71)] == [None, 14, 14, 28, 28, 56, 56, None]
    with pytest.raises(ValueError):
        cal.BucketSpec((14, 28), (3, 21))


def test_slice_selects_bucket_and_drops_bad_quotes():
    rows = _rows(lambda s, k, t, r: bs_call(s, k, t, r, 0.3))
    rows.append(ChainRow("2021-03-01", "X", "2021-03-31", 50.0, 0.01, 100.0, 0.01))  # below intrinsic
    slc = cal.bucket_slice(rows, 28)
    assert slc.n_quotes == 5 and slc.n_dropped == 1
    np.testing.assert_allclose(slc.market_iv, 0.3, atol=1e-9)
    with pytest.raises(ValueError):
        cal.bucket_slice(rows, 7)
    mixed = rows + [ChainRow("2021-03-01", "X", "2021-03-31", 100.0, 3.0, 101.0, 0.01)]
    with pytest.raises(ValueError):
        cal.bucket_slice(mixed, 28)


def test_bs_fit_recovers_sigma_with_zero_ivrmse():
    slc = cal.bucket_slice(_rows(lambda s, k, t, r: bs_call(s, k, t, r, 0.23)), 56)
    fit = cal.fit_parametric(slc, "bs", FAST)
    assert fit.status == "ok"
    assert fit.params["sigma"] == pytest.approx(0.23, abs=1e-8)
    assert fit.ivrmse_1e3 < 1e-4


def test_nested_models_never_fit_worse_than_bs():
    def jd(s, k, t, r):
        return jd_price(EuroCall(k, t, s, r), JDParams(0.15, 0.8, -0.15, 0.1))

    slc = cal.bucket_slice(_rows(jd), 28)
    fits = cal.calibrate_slice(slc, ("bs", "jd", "sv"), cal.FitConfig(max_evals={"bs": 400, "jd": 1000, "sv": 200}))
    assert fits["jd"].objective <= fits["bs"].objective
    assert fits["sv"].objective <= fits["bs"].objective
    assert fits["jd"].objective < 1e-3 * fits["bs"].objective


def test_empty_slice_and_unknown_model():
    slc = cal.bucket_slice(_rows(lambda s, k, t, r: bs_call(s, k, t, r, 0.2), days=(10,)), 56)
    assert slc.empty
    assert cal.fit_parametric(slc, "bs").status == "empty"
    with pytest.raises(ValueError):
        cal.fit_parametric(slc, "sabr")


def test_ivrmse_by_hand():
    slc = cal.bucket_slice(_rows(lambda s, k, t, r: bs_call(s, k, t, r, 0.2)), 28)
    shifted = cal.model_prices(slc, "bs", {"sigma": 0.21})
    err = cal.ivrmse(slc, shifted)
    assert err.value == pytest.approx(10.0, abs=1e-6) and err.n_used == 5
    bad = cal.ivrmse(slc, np.full(5, -1.0))
    assert bad.status == "undefined" and np.isnan(bad.value)


def test_rl_sigma_fit_against_a_bs_table():
    def price_fn(sigma, m, tau):
        fwd = np.exp(0.01 * tau)
        return bs_price(EuroCall(m * fwd, tau, 1.0, 0.01), sigma)

    table = cal.build_price_table("qlbs", price_fn, np.linspace(0.05, 0.6, 12), np.linspace(0.85, 1.15, 31))
    again = cal.PriceTable.from_dict(table.to_dict())
    assert np.array_equal(again.prices, table.prices)
    slc = cal.bucket_slice(_rows(lambda s, k, t, r: bs_call(s, k, t, r, 0.27), days=(28,)), 28)
    fit = cal.fit_rl_sigma(slc, table)
    assert fit.status == "ok"
    assert fit.params["sigma"] == pytest.approx(0.27, abs=2e-3)
    high = cal.bucket_slice(_rows(lambda s, k, t, r: bs_call(s, k, t, r, 0.9), days=(28,)), 28)
    assert cal.fit_rl_sigma(high, table).status == "boundary"
