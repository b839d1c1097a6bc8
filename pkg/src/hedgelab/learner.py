"""REINFORCE with a learned baseline, shared by both environments."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .accounting import CostSpec
from .market import MarketParams
from .nets import NetParams, NetSpec
from .policies import GaussianPolicy
from .pricers import NumericalError
from .qlbs import QlbsConfig, qlbs_rollout
from .rlop import InitialWealth, RlopConfig, rlop_rollout, wealth_gradient
from .seeding import derive_seed

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    value_learning_rate: float | None = None  # defaults to learning_rate
    wealth_learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batches_per_epoch: int = 4
    n_epochs: int = 100
    entropy_floor: float = 0.01
    grad_clip_norm: float = 10.0
    wealth_average_tail: float = 0.5  # fraction of final updates whose pi0 iterates are averaged
    hidden_width: int = 64
    n_residual_blocks: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.n_epochs < 0 or self.batches_per_epoch < 1:
            raise ValueError("invalid epoch settings")
        if not 0.0 <= self.wealth_average_tail <= 1.0:
            raise ValueError("wealth_average_tail must be in [0, 1]")


class AdamState:
    def __init__(self, n: int):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float, cfg: TrainConfig) -> np.ndarray:
        """One Adam descent step on ``grad``; returns updated params."""
        self.t += 1
        self.m = cfg.beta1 * self.m + (1 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1 - cfg.beta2) * grad * grad
        m_hat = self.m / (1 - cfg.beta1**self.t)
        v_hat = self.v / (1 - cfg.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def clip_by_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(grad))
    if max_norm and norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


@dataclass
class Trajectories:
    features: np.ndarray  # (n, 3)
    actions: np.ndarray  # (n,)
    returns: np.ndarray  # (n,) discounted reward-to-go


def reward_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """G_t = sum_{s >= t} gamma^(s - t) r_s along the last axis."""
    out = np.empty_like(rewards, dtype=float)
    acc = np.zeros(rewards.shape[:-1])
    for t in range(rewards.shape[-1] - 1, -1, -1):
        acc = rewards[..., t] + gamma * acc
        out[..., t] = acc
    return out


def qlbs_trajectories(ro, cfg: QlbsConfig) -> Trajectories:
    gamma = cfg.params.gamma
    g = reward_to_go(ro.training_rewards(cfg.lam, gamma), gamma)
    return Trajectories(ro.features.reshape(-1, 3), ro.actions.reshape(-1), g.reshape(-1))


def rlop_trajectories(ro, cfg: RlopConfig) -> Trajectories:
    gamma = cfg.params.gamma
    steps = ro.step_rewards()  # (paths, expiry, step), NaN-free
    g = reward_to_go(steps, gamma)[:, ro.mask]
    return Trajectories(ro.features, ro.valid_actions.reshape(-1), g.reshape(-1))


@dataclass
class StepDiagnostics:
    mean_return: float
    value_loss: float
    policy_grad_norm: float
    value_grad_norm: float
    mean_sigma: float


def policy_gradient(policy: NetParams, value: NetParams, traj: Trajectories, cfg: TrainConfig, use_baseline=True):
    """Score-function gradient of the mean advantage-weighted log-density."""
    baseline = nets.value_forward(value, traj.features) if use_baseline else 0.0
    adv = traj.returns - baseline
    n = len(adv)
    _, grad = nets.log_prob_and_grad(policy, traj.features, traj.actions, adv / n, cfg.entropy_floor)
    return grad


def reinforce_step(policy: NetParams, value: NetParams, traj: Trajectories, cfg: TrainConfig,
                   opt_policy: AdamState, opt_value: AdamState):
    """One joint update of policy (ascent) and baseline (regression on G)."""
    v_loss, grad_v, baseline = nets.value_loss_and_grad(value, traj.features, traj.returns, return_pred=True)
    adv = traj.returns - baseline
    _, grad_p, sigma = nets.log_prob_and_grad(
        policy, traj.features, traj.actions, adv / len(adv), cfg.entropy_floor, return_sigma=True
    )
    if not (np.all(np.isfinite(grad_p)) and np.all(np.isfinite(grad_v))):
        raise NumericalError(
            f"non-finite gradient: policy finite={np.isfinite(grad_p).all()}, "
            f"value finite={np.isfinite(grad_v).all()}, value_loss={v_loss}, "
            f"return range=({traj.returns.min()}, {traj.returns.max()})"
        )
    grad_p, norm_p = clip_by_norm(grad_p, cfg.grad_clip_norm)
    grad_v, norm_v = clip_by_norm(grad_v, cfg.grad_clip_norm)
    new_policy = NetParams(policy.spec, opt_policy.step(policy.theta, -grad_p, cfg.learning_rate, cfg), policy.seed)
    v_lr = cfg.value_learning_rate or cfg.learning_rate
    new_value = NetParams(value.spec, opt_value.step(value.theta, grad_v, v_lr, cfg), value.seed)
    diag = StepDiagnostics(
        mean_return=float(traj.returns.mean()),
        value_loss=v_loss,
        policy_grad_norm=norm_p,
        value_grad_norm=norm_v,
        mean_sigma=float(sigma.mean()),
    )
    return new_policy, new_value, diag


@dataclass
class TrainedModel:
    env_kind: str
    env_cfg: QlbsConfig | RlopConfig
    train_cfg: TrainConfig
    policy: NetParams
    value: NetParams
    wealth: InitialWealth | None = None
    loss_curve: list[dict] = field(default_factory=list)

    def policy_obj(self) -> GaussianPolicy:
        return GaussianPolicy(self.policy, self.train_cfg.entropy_floor)


def _replication_error(env_kind, ro, cfg) -> float:
    if env_kind == "qlbs":
        pi0 = ro.ledger.value[:, 0]
        return float(math.exp(cfg.params.r * cfg.params.maturity) * np.mean(np.abs(pi0 - pi0.mean())))
    return float(np.mean(np.abs(ro.terminal[:, -1] - ro.payoffs[:, -1])))


def train(env_kind: str, env_cfg, train_cfg: TrainConfig) -> TrainedModel:
    """Train a Gaussian hedging policy; deterministic given ``train_cfg.seed``."""
    if env_kind not in ("qlbs", "rlop"):
        raise ValueError(f"unknown environment {env_kind!r}")
    pspec = NetSpec(3, train_cfg.hidden_width, train_cfg.n_residual_blocks, "policy")
    vspec = NetSpec(3, train_cfg.hidden_width, train_cfg.n_residual_blocks, "value")
    policy = nets.init_params(pspec, derive_seed(train_cfg.seed, 0))
    value = nets.init_params(vspec, derive_seed(train_cfg.seed, 1))
    opt_p, opt_v = AdamState(pspec.n_params), AdamState(vspec.n_params)
    wealth = opt_w = None
    if env_kind == "rlop":
        wealth = InitialWealth.lower_bound(env_cfg)
        opt_w = AdamState(env_cfg.params.n_steps)

    n_updates = train_cfg.n_epochs * train_cfg.batches_per_epoch
    avg_from = n_updates - int(round(train_cfg.wealth_average_tail * n_updates))
    pi0_sum, n_avg = None, 0
    curve = []
    for epoch in range(train_cfg.n_epochs):
        stats = []
        for b in range(train_cfg.batches_per_epoch):
            seed = derive_seed(train_cfg.seed, 2, epoch, b)
            pol = GaussianPolicy(policy, train_cfg.entropy_floor)
            if env_kind == "qlbs":
                ro = qlbs_rollout(pol, env_cfg, seed)
                traj = qlbs_trajectories(ro, env_cfg)
                reward = float(ro.rewards.sum(axis=1).mean())
            else:
                ro = rlop_rollout(pol, wealth, env_cfg, seed)
                traj = rlop_trajectories(ro, env_cfg)
                reward = float(ro.rewards.mean())
                grad_w = wealth_gradient(ro, env_cfg)
                wealth = InitialWealth(opt_w.step(wealth.pi0, -grad_w, train_cfg.wealth_learning_rate, train_cfg))
                if epoch * train_cfg.batches_per_epoch + b >= avg_from:
                    pi0_sum = wealth.pi0.copy() if pi0_sum is None else pi0_sum + wealth.pi0
                    n_avg += 1
            err = _replication_error(env_kind, ro, env_cfg)
            policy, value, diag = reinforce_step(policy, value, traj, train_cfg, opt_p, opt_v)
            stats.append((reward, err, diag.value_loss, diag.mean_sigma, diag.policy_grad_norm))
        s = np.mean(stats, axis=0) if stats else [float("nan")] * 5
        row = {
            "epoch": epoch,
            "mean_reward": float(s[0]),
            "replication_error": float(s[1]),
            "value_loss": float(s[2]),
            "mean_sigma": float(s[3]),
            "policy_grad_norm": float(s[4]),
        }
        if wealth is not None:
            row["pi0_final_expiry"] = float(wealth.pi0[-1])
        curve.append(row)
    if wealth is not None:
        if n_avg:
            wealth = InitialWealth(pi0_sum / n_avg)
        wealth.trained = train_cfg.n_epochs > 0
    return TrainedModel(env_kind, env_cfg, train_cfg, policy, value, wealth, curve)


# --- checkpoints -------------------------------------------------------------


def _env_to_dict(env_cfg) -> dict:
    return asdict(env_cfg)


def _env_from_dict(env_kind: str, d: dict):
    d = dict(d)
    params = MarketParams(**d.pop("params"))
    cost = CostSpec(**d.pop("cost"))
    cls = QlbsConfig if env_kind == "qlbs" else RlopConfig
    return cls(params=params, cost=cost, **d)


def checkpoint_dict(model: TrainedModel) -> dict:
    return {
        "schema_version": CHECKPOINT_VERSION,
        "env_kind": model.env_kind,
        "env_cfg": _env_to_dict(model.env_cfg),
        "train_cfg": asdict(model.train_cfg),
        "policy": {"spec": asdict(model.policy.spec), "seed": model.policy.seed, "theta": model.policy.theta.tolist()},
        "value": {"spec": asdict(model.value.spec), "seed": model.value.seed, "theta": model.value.theta.tolist()},
        "wealth": None if model.wealth is None else {"pi0": model.wealth.pi0.tolist(), "trained": model.wealth.trained},
        "loss_curve": model.loss_curve,
    }


def save_checkpoint(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(model), indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> TrainedModel:
    d = json.loads(Path(path).read_text())
    if d.get("schema_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('schema_version')}")

    def net(rec):
        return NetParams(NetSpec(**rec["spec"]), np.asarray(rec["theta"], dtype=float), rec["seed"])

    w = d["wealth"]
    return TrainedModel(
        env_kind=d["env_kind"],
        env_cfg=_env_from_dict(d["env_kind"], d["env_cfg"]),
        train_cfg=TrainConfig(**d["train_cfg"]),
        policy=net(d["policy"]),
        value=net(d["value"]),
        wealth=None if w is None else InitialWealth(w["pi0"], w["trained"]),
        loss_curve=d["loss_curve"],
    )
