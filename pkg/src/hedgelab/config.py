"""Experiment configuration: strict JSON documents mapped onto dataclasses.

Every section is optional and falls back to its defaults; any key that
is not a declared field is rejected with its dotted path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .accounting import CostSpec
from .calibration import BucketSpec
from .learner import TrainConfig
from .market import MarketParams
from .qlbs import QlbsConfig
from .rlop import RlopConfig


class ConfigError(ValueError):
    """The configuration document is malformed."""


@dataclass(frozen=True)
class QlbsSection:
    lam: float = 0.0
    strike: float = 1.0
    batch_size: int = 256


@dataclass(frozen=True)
class RlopSection:
    strike: float = 1.0
    penalty_kind: str = "absolute"
    batch_size: int = 64


@dataclass(frozen=True)
class PricingSection:
    n_batches: int = 16  # QLBS evaluation batches
    seed_offset: int = 1_000_003  # keeps evaluation paths apart from training paths


@dataclass(frozen=True)
class SweepSection:
    n_seeds: int = 1
    envs: tuple[str, ...] = ("qlbs", "rlop")


@dataclass(frozen=True)
class RlTableSection:
    sigmas: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.7)
    moneyness: tuple[float, ...] = (0.9, 0.95, 0.97, 1.0, 1.03, 1.05, 1.1)
    n_paths: int = 2000


@dataclass(frozen=True)
class CalibrationSection:
    models: tuple[str, ...] = ("bs", "jd", "sv")
    buckets: tuple[int, ...] = (14, 28, 56)
    bucket_edges: tuple[int, ...] = (3, 21, 42, 70)
    n_starts: int = 5
    max_evals_bs: int = 400
    max_evals_jd: int = 1000
    max_evals_sv: int = 400
    periods: dict = field(default_factory=dict)  # name -> [first_date, last_date]
    rl_table: RlTableSection = field(default_factory=RlTableSection)

    def bucket_spec(self) -> BucketSpec:
        return BucketSpec(tuple(self.buckets), tuple(self.bucket_edges))


@dataclass(frozen=True)
class BacktestSection:
    models: tuple[str, ...] = ("bs", "jd", "sv", "qlbs", "rlop")
    moneyness_groups: dict = field(default_factory=lambda: {"atm": 1.0, "otm": 1.03})
    premium_source: str = "mid"  # or "model"
    refit_daily: bool = False
    drift: str = "risk_neutral"  # normalization drift for RL features: risk_neutral or market


@dataclass(frozen=True)
class IoSection:
    chain: str = ""
    checkpoints: dict = field(default_factory=dict)  # env -> checkpoint path
    price_tables: dict = field(default_factory=dict)  # env -> price-table JSON path
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    experiment: str = "default"
    market: MarketParams = field(default_factory=MarketParams)
    cost: CostSpec = field(default_factory=CostSpec)
    qlbs: QlbsSection = field(default_factory=QlbsSection)
    rlop: RlopSection = field(default_factory=RlopSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    pricing: PricingSection = field(default_factory=PricingSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    backtest: BacktestSection = field(default_factory=BacktestSection)
    io: IoSection = field(default_factory=IoSection)

    def qlbs_config(self) -> QlbsConfig:
        q = self.qlbs
        return QlbsConfig(self.market, self.cost, q.lam, q.strike, q.batch_size)

    def rlop_config(self) -> RlopConfig:
        r = self.rlop
        return RlopConfig(self.market, self.cost, r.strike, r.penalty_kind, r.batch_size)

    def env_config(self, env: str):
        if env == "qlbs":
            return self.qlbs_config()
        if env == "rlop":
            return self.rlop_config()
        raise ConfigError(f"unknown environment {env!r}")

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)


# --- strict decoding --------------------------------------------------------


def _is_dataclass_type(tp) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _decode(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if _is_dataclass_type(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where or 'config'}: expected an object")
        return _build(tp, value, where)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _decode(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return tuple(_decode(args[0], v, f"{where}[{i}]") for i, v in enumerate(value))
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return dict(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def _build(cls, doc: dict, where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(doc) - names)
    if unknown:
        path = ", ".join(f"{where}.{k}" if where else k for k in unknown)
        raise ConfigError(f"unknown key(s): {path}")
    kwargs = {k: _decode(hints[k], v, f"{where}.{k}" if where else k) for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from None


def from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return _build(ExperimentConfig, doc)


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from None
    return from_dict(doc)


def to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def content_hash(*parts) -> str:
    """Short sha256 of the canonical JSON of ``parts``."""
    blob = json.dumps([to_dict(p) if dataclasses.is_dataclass(p) else p for p in parts],
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
