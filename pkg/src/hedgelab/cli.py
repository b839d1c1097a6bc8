"""hedgelab command line: train, sweep, calibrate, backtest, verify.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration,
3 numerical failure, 4 missing or empty data.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .calibration import PriceTable
from .config import ConfigError, ExperimentConfig, load_config, to_dict
from .data_io import ReportRow, SchemaError, emit_plot_series, emit_report, load_chain
from .learner import load_checkpoint, save_checkpoint
from .pricers import NumericalError

log = logging.getLogger("hedgelab")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA = 0, 1, 2, 3, 4


class DataError(RuntimeError):
    pass


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _write_curve(path: Path, curve: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for row in curve for k in row})
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(keys)
        for row in curve:
            w.writerow([repr(row.get(k, "")) if isinstance(row.get(k), float) else row.get(k, "") for k in keys])
    return path


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "format", None):
        cfg = dataclasses.replace(cfg, io=dataclasses.replace(cfg.io, format=args.format))
    if cfg.io.format not in ("csv", "json"):
        raise ConfigError(f"io.format must be csv or json, got {cfg.io.format!r}")
    return cfg


def _load_rows(cfg: ExperimentConfig, chain_arg):
    path = chain_arg or cfg.io.chain
    if not path:
        raise DataError("no chain file given")
    if not Path(path).exists():
        raise DataError(f"chain file not found: {path}")
    try:
        res = load_chain(path)
    except SchemaError as e:
        raise DataError(str(e)) from None
    if not res.rows:
        raise DataError(f"chain file has no valid rows: {path}")
    return res


def _policies_and_tables(cfg: ExperimentConfig):
    policies = {env: load_checkpoint(p) for env, p in sorted(cfg.io.checkpoints.items())}
    tables = {env: PriceTable.from_dict(json.loads(Path(p).read_text()))
              for env, p in sorted(cfg.io.price_tables.items())}
    return policies, tables


# --- commands ----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    model, _ = ex.train_cached(cfg, args.env, None)
    ckpt = save_checkpoint(model, out / f"checkpoint_{args.env}.json")
    _write_curve(out / f"loss_curve_{args.env}.csv", model.loss_curve)
    pp = ex.evaluate_price(model, cfg)
    rows = [ReportRow(cfg.experiment, "sim", "train", "-", "atm", args.env, "price", pp.price, 1),
            ReportRow(cfg.experiment, "sim", "train", "-", "atm", args.env, "stderr", pp.stderr, 1)]
    emit_report(rows, out / f"train_{args.env}.{cfg.io.format}", cfg.io.format)
    log.info("checkpoint %s, price %.6f (%s)", ckpt, pp.price, pp.status)
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--grid must be comma-separated numbers, got {text!r}") from None
    if not grid:
        raise ConfigError("--grid is empty")
    return grid


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.param not in ex.SWEEP_PARAMS:
        raise ConfigError(f"--param must be one of {ex.SWEEP_PARAMS}")
    grid = _parse_grid(args.grid)
    out = Path(args.out_dir)
    envs = (args.env,) if args.env else None
    points, runs = ex.sweep(cfg, args.param, grid, out / "cache", envs)
    emit_plot_series(points, out / f"sweep_{args.param}.csv")
    _write_json(out / f"sweep_{args.param}_runs.json", [dataclasses.asdict(r) for r in runs])
    hits = sum(r.cache_hit for r in runs)
    log.info("sweep %s: %d runs, %d from cache", args.param, len(runs), hits)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    res = _load_rows(cfg, args.chain)
    _, tables = _policies_and_tables(cfg)
    summary = ex.calibrate_chain(res.rows, cfg, tables)
    out = Path(args.out_dir)
    emit_report(summary.report, out / f"calibration.{cfg.io.format}", cfg.io.format)
    _write_json(out / "calibration_fits.json", {"fits": summary.fits, "skipped": summary.skipped,
                                                "rejected_rows": dict(sorted(res.rejects.items()))})
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config(args)
    res = _load_rows(cfg, args.chain)
    policies, tables = _policies_and_tables(cfg)
    summary = ex.backtest_chain(res.rows, cfg, policies, tables)
    out = Path(args.out_dir)
    emit_report(summary.report, out / f"backtest.{cfg.io.format}", cfg.io.format)
    _write_json(out / "backtest_hedges.json", {"hedges": summary.fits, "skipped": summary.skipped,
                                               "rejected_rows": dict(sorted(res.rejects.items()))})
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    cfg = _config(args)
    results = run_suite(cfg, statistical=not args.quick)
    failed = False
    for r in results:
        tag = "PASS" if r.passed else ("WARN" if r.kind == "statistical" else "FAIL")
        print(f"{tag:4s} [{r.kind}] {r.name}: {r.detail}")
        failed |= (not r.passed and r.kind == "deterministic")
    if args.out_dir:
        _write_json(Path(args.out_dir) / "verify.json", [dataclasses.asdict(r) for r in results])
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_show_config(args) -> int:
    print(json.dumps(to_dict(_config(args)), indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hedgelab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="out"):
        sp.add_argument("--config", help="JSON experiment config (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out-dir", default=out_default, help="output directory (default: %(default)s)")
        sp.add_argument("--format", choices=("csv", "json"), help="report format (overrides io.format)")

    sp = sub.add_parser("train", help="train a policy and write its checkpoint and loss curve")
    common(sp)
    sp.add_argument("--env", choices=("qlbs", "rlop"), required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", help="price trained models over a parameter grid")
    common(sp)
    sp.add_argument("--param", required=True, help="one of sigma, mu, lambda, epsilon")
    sp.add_argument("--grid", required=True, help="comma-separated values, e.g. 0,0.001,0.01")
    sp.add_argument("--env", choices=("qlbs", "rlop"), help="restrict to one environment")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("calibrate", help="daily BS/JD/SV (and RL sigma) fits with equal-day IVRMSE")
    common(sp)
    sp.add_argument("chain", nargs="?", help="cleaned option-chain CSV (or io.chain)")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("backtest", help="delta-hedging backtest over a chain")
    common(sp)
    sp.add_argument("chain", nargs="?", help="cleaned option-chain CSV (or io.chain)")
    sp.set_defaults(func=cmd_backtest)

    sp = sub.add_parser("verify", help="run the oracle and identity checks")
    common(sp, out_default="")
    sp.add_argument("--quick", action="store_true", help="skip the statistical checks")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("show-config", help="print the effective configuration")
    common(sp)
    sp.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
