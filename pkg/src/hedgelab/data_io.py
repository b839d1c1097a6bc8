"""Option-chain CSV ingestion and report emission.

Chain files use one canonical schema, a cleaned export with columns

    date, asset, expiry, strike, call_mid, spot, rate

(dates ISO-8601, rate continuously compounded per year).  Bad rows are
rejected with a reason and counted; a missing column is fatal.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path

CHAIN_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
CHAIN_COLUMNS = ("date", "asset", "expiry", "strike", "call_mid", "spot", "rate")
METRICS = ("ivrmse_1e3", "hedging_rmse", "avg_trading_cost", "shortfall_prob", "price", "stderr")


class SchemaError(ValueError):
    """The file cannot be read under the requested schema."""


@dataclass(frozen=True)
class ChainRow:
    date: str
    asset: str
    expiry: str
    strike: float
    call_mid: float
    spot: float
    rate: float


@dataclass
class LoadResult:
    rows: list[ChainRow]
    rejects: Counter
    rejected_lines: list[tuple[int, str]]

    @property
    def n_in(self) -> int:
        return len(self.rows) + sum(self.rejects.values())


def _parse_row(rec: dict) -> ChainRow:
    """Raise ValueError(reason) for an invalid record."""
    try:
        date = dt.date.fromisoformat(rec["date"].strip())
        expiry = dt.date.fromisoformat(rec["expiry"].strip())
    except ValueError:
        raise ValueError("bad_date") from None
    try:
        strike, mid, spot, rate = (float(rec[k]) for k in ("strike", "call_mid", "spot", "rate"))
    except (TypeError, ValueError):
        raise ValueError("bad_number") from None
    if not all(math.isfinite(v) for v in (strike, mid, spot, rate)):
        raise ValueError("bad_number")
    asset = rec["asset"].strip()
    if not asset:
        raise ValueError("missing_asset")
    if strike <= 0:
        raise ValueError("nonpositive_strike")
    if mid <= 0:
        raise ValueError("nonpositive_mid")
    if spot <= 0:
        raise ValueError("nonpositive_spot")
    if expiry <= date:
        raise ValueError("expiry_not_after_date")
    return ChainRow(date.isoformat(), asset, expiry.isoformat(), strike, mid, spot, rate)


def load_chain(path, schema_version: int = CHAIN_SCHEMA_VERSION) -> LoadResult:
    if schema_version != CHAIN_SCHEMA_VERSION:
        raise SchemaError(f"unsupported chain schema version {schema_version}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in CHAIN_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        rows, rejects, lines = [], Counter(), []
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(_parse_row(rec))
            except ValueError as e:
                rejects[str(e)] += 1
                lines.append((lineno, str(e)))
    return LoadResult(rows, rejects, lines)


def write_chain(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CHAIN_COLUMNS)
        for r in rows:
            w.writerow([r.date, r.asset, r.expiry, repr(r.strike), repr(r.call_mid), repr(r.spot), repr(r.rate)])
    return path


def group_by_day(rows) -> dict[tuple[str, str], list[ChainRow]]:
    """Rows keyed by (date, asset) in sorted key order."""
    out: dict[tuple[str, str], list[ChainRow]] = {}
    for r in rows:
        out.setdefault((r.date, r.asset), []).append(r)
    return dict(sorted(out.items()))


# --- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    asset: str
    period: str
    bucket: str
    moneyness: str
    model: str
    metric: str
    value: float
    n_days: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")

    def sort_key(self):
        return (self.experiment, self.asset, self.period, self.bucket, self.moneyness, self.model, self.metric,
                self.value, self.n_days)


REPORT_COLUMNS = tuple(f.name for f in fields(ReportRow))


def _fmt_table(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.2f}"


def render_report(rows, fmt: str = "csv") -> str:
    rows = sorted(rows, key=ReportRow.sort_key)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            rec = asdict(r)
            rec["value"] = _fmt_table(r.value)
            w.writerow([rec[c] for c in REPORT_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        recs = [{**asdict(r), "value": r.value if math.isfinite(r.value) else None} for r in rows]
        doc = {"schema_version": REPORT_SCHEMA_VERSION, "rows": recs}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(rows, path, fmt: str = "csv") -> Path:
    """Write rows in canonical order; csv rounds values to 2 decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_report(rows, fmt))
    return path


@dataclass(frozen=True)
class SeriesPoint:
    parameter: float
    price: float
    stderr: float
    model: str


def emit_plot_series(points, path) -> Path:
    """CSV of (parameter, price, stderr, model), sorted by model then parameter."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = sorted(points, key=lambda p: (p.model, p.parameter))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("parameter", "price", "stderr", "model"))
        for p in pts:
            w.writerow((repr(float(p.parameter)), repr(float(p.price)), repr(float(p.stderr)), p.model))
    return path


def read_plot_series(path) -> list[SeriesPoint]:
    with open(path, newline="") as f:
        return [SeriesPoint(float(r["parameter"]), float(r["price"]), float(r["stderr"]), r["model"])
                for r in csv.DictReader(f)]
