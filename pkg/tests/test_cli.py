import json
import subprocess
import sys

import pytest

from hedgelab import accounting, cli
from hedgelab import experiments as ex
from hedgelab.data_io import write_chain
from hedgelab.pricers import NumericalError
from hedgelab.synthetic import synthetic_chain

TINY = {"market": {"n_steps": 4}, "qlbs": {"batch_size": 8}, "rlop": {"batch_size": 4},
        "train": {"n_epochs": 2, "batches_per_epoch": 1, "hidden_width": 4, "n_residual_blocks": 1},
        "pricing": {"n_batches": 2}, "calibration": {"models": ["bs"], "n_starts": 1},
        "backtest": {"models": ["bs"]}}


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return str(p)


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    return str(write_chain(synthetic_chain(n_days=30, n_entry_days=1, seed=5), tmp_path_factory.mktemp("c") / "c.csv"))


def test_train_writes_checkpoint_curve_and_report(tiny, tmp_path):
    assert cli.main(["train", "--env", "rlop", "--config", tiny, "--out-dir", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["checkpoint_rlop.json", "loss_curve_rlop.csv", "tiny.json", "train_rlop.csv"]
    curve = (tmp_path / "loss_curve_rlop.csv").read_text().splitlines()
    assert len(curve) == 3 and "pi0_final_expiry" in curve[0]


def test_sweep_and_format_flag(tiny, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["sweep", "--param", "sigma", "--grid", "0.1,0.2", "--env", "qlbs", "--config", tiny,
                     "--out-dir", str(out)]) == 0
    assert (out / "sweep_sigma.csv").read_text().startswith("parameter,price,stderr,model\n")
    assert cli.main(["sweep", "--param", "kappa", "--grid", "1", "--config", tiny, "--out-dir", str(out)]) == 2
    assert cli.main(["sweep", "--param", "sigma", "--grid", "a,b", "--config", tiny, "--out-dir", str(out)]) == 2


def test_calibrate_and_backtest(tiny, chain, tmp_path):
    assert cli.main(["calibrate", chain, "--config", tiny, "--out-dir", str(tmp_path), "--format", "json"]) == 0
    doc = json.loads((tmp_path / "calibration.json").read_text())
    assert doc["schema_version"] == 1 and doc["rows"]
    assert cli.main(["backtest", chain, "--config", tiny, "--out-dir", str(tmp_path)]) == 0
    assert "hedging_rmse" in (tmp_path / "backtest.csv").read_text()


def test_exit_codes(tiny, tmp_path, monkeypatch):
    assert cli.main(["calibrate", str(tmp_path / "none.csv"), "--config", tiny]) == 4
    empty = tmp_path / "e.csv"
    empty.write_text("date,asset,expiry,strike,call_mid,spot,rate\n")
    assert cli.main(["backtest", str(empty), "--config", tiny]) == 4
    assert cli.main(["calibrate", "--config", tiny]) == 4
    bad = tmp_path / "bad.json"
    bad.write_text('{"train": {"n_epoch": 3}}')
    assert cli.main(["train", "--env", "qlbs", "--config", str(bad)]) == 2

    def boom(*a, **k):
        raise NumericalError("no convergence")

    monkeypatch.setattr(ex, "calibrate_chain", boom)
    good = tmp_path / "g.csv"
    write_chain(synthetic_chain(n_days=2, seed=0), good)
    assert cli.main(["calibrate", str(good), "--config", tiny, "--out-dir", str(tmp_path)]) == 3


def test_verify_passes_and_fails_on_a_mutated_ledger(tmp_path, monkeypatch, capsys):
    assert cli.main(["verify", "--quick", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 10
    real = accounting.qlbs_backward_portfolio

    def leaky(path, actions, payoff, params, cost):
        led = real(path, actions, payoff, params, cost)
        value = led.value.copy()
        value[..., 0] *= 1 + 1e-7
        return accounting.HedgeLedger(led.path, led.positions, led.cash, value, led.costs, led.params, led.cost)

    monkeypatch.setattr(accounting, "qlbs_backward_portfolio", leaky)
    assert cli.main(["verify", "--quick"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_show_config_and_console_entry(tiny):
    res = subprocess.run([sys.executable, "-m", "hedgelab.cli", "show-config", "--config", tiny, "--seed", "9"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["seed"] == 9
    res = subprocess.run([sys.executable, "-m", "hedgelab.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "backtest" in res.stdout
