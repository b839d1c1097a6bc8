"""Residual tanh MLPs on a flat parameter vector, with exact backprop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .market import philox_generator

STREAM_INIT = 2
CHUNK_ROWS = 1 << 16
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class NetSpec:
    input_dim: int = 3
    hidden_width: int = 64
    n_residual_blocks: int = 2
    head: str = "policy"  # "policy" -> (mean, raw std); "value" -> scalar

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_width < 1 or self.n_residual_blocks < 0:
            raise ValueError(f"invalid network spec {self}")
        if self.head not in ("policy", "value"):
            raise ValueError(f"unknown head {self.head!r}")

    @property
    def output_dim(self) -> int:
        return 2 if self.head == "policy" else 1

    @cached_property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        h, d = self.hidden_width, self.input_dim
        shapes = [("W_in", (h, d)), ("b_in", (h,))]
        for k in range(self.n_residual_blocks):
            shapes += [(f"W1_{k}", (h, h)), (f"b1_{k}", (h,)), (f"W2_{k}", (h, h)), (f"b2_{k}", (h,))]
        shapes += [("W_out", (self.output_dim, h)), ("b_out", (self.output_dim,))]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(math.prod(s) for _, s in self.layout)

    def unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Views into ``theta`` keyed by layer name."""
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        out, i = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = theta[i:i + n].reshape(shape)
            i += n
        return out


@dataclass
class NetParams:
    spec: NetSpec
    theta: np.ndarray
    seed: int

    def copy(self) -> "NetParams":
        return NetParams(self.spec, self.theta.copy(), self.seed)


def init_params(spec: NetSpec, seed: int) -> NetParams:
    """Scaled normal weights, zero biases, zero output layer."""
    rng = philox_generator(seed, STREAM_INIT)
    theta = np.zeros(spec.n_params)
    w = spec.unpack(theta)
    w["W_in"][:] = rng.standard_normal(w["W_in"].shape) / math.sqrt(spec.input_dim)
    for k in range(spec.n_residual_blocks):
        w[f"W1_{k}"][:] = rng.standard_normal(w[f"W1_{k}"].shape) / math.sqrt(spec.hidden_width)
        w[f"W2_{k}"][:] = rng.standard_normal(w[f"W2_{k}"].shape) * (0.5 / math.sqrt(spec.hidden_width))
    return NetParams(spec, theta, seed)


def forward(net: NetParams, x: np.ndarray):
    """Returns (outputs of shape (n, output_dim), cache for ``backward``)."""
    spec = net.spec
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"features must have shape (n, {spec.input_dim}), got {x.shape}")
    w = spec.unpack(net.theta)
    h = np.tanh(x @ w["W_in"].T + w["b_in"])
    hs, zs = [h], []
    for k in range(spec.n_residual_blocks):
        z = np.tanh(h @ w[f"W1_{k}"].T + w[f"b1_{k}"])
        h = h + z @ w[f"W2_{k}"].T + w[f"b2_{k}"]
        zs.append(z)
        hs.append(h)
    out = h @ w["W_out"].T + w["b_out"]
    return out, (x, hs, zs)


def backward(net: NetParams, cache, g_out: np.ndarray) -> np.ndarray:
    """Gradient of sum(g_out * outputs) with respect to the flat parameters."""
    spec = net.spec
    x, hs, zs = cache
    w = spec.unpack(net.theta)
    grad = np.zeros_like(net.theta)
    g = spec.unpack(grad)

    g["W_out"][:] = g_out.T @ hs[-1]
    g["b_out"][:] = g_out.sum(axis=0)
    gh = g_out @ w["W_out"]
    for k in reversed(range(spec.n_residual_blocks)):
        z = zs[k]
        g[f"W2_{k}"][:] = gh.T @ z
        g[f"b2_{k}"][:] = gh.sum(axis=0)
        ga = (gh @ w[f"W2_{k}"]) * (1.0 - z * z)
        g[f"W1_{k}"][:] = ga.T @ hs[k]
        g[f"b1_{k}"][:] = ga.sum(axis=0)
        gh = gh + ga @ w[f"W1_{k}"]
    ga0 = gh * (1.0 - hs[0] ** 2)
    g["W_in"][:] = ga0.T @ x
    g["b_in"][:] = ga0.sum(axis=0)
    return grad


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def predict(net: NetParams, x: np.ndarray, chunk: int = CHUNK_ROWS) -> np.ndarray:
    """Forward pass without a cache, in row chunks to bound memory."""
    x = np.asarray(x, dtype=float)
    if len(x) <= chunk:
        return forward(net, x)[0]
    return np.concatenate([forward(net, x[i:i + chunk])[0] for i in range(0, len(x), chunk)])


def policy_forward(net: NetParams, features, entropy_floor: float = 0.0):
    """Gaussian policy head: (mean, std) with std = softplus(raw) + floor."""
    out = predict(net, features)
    return out[:, 0], softplus(out[:, 1]) + entropy_floor


def value_forward(net: NetParams, features) -> np.ndarray:
    return predict(net, features)[:, 0]


def log_prob_and_grad(net: NetParams, features, actions, weights=None, entropy_floor: float = 0.0,
                      return_sigma: bool = False):
    """Gaussian log-densities and the gradient of sum(weights * log-density)."""
    out, cache = forward(net, features)
    mu, raw = out[:, 0], out[:, 1]
    sigma = softplus(raw) + entropy_floor
    diff = np.asarray(actions, dtype=float) - mu
    logp = -0.5 * (diff / sigma) ** 2 - np.log(sigma) - _LOG_SQRT_2PI
    wts = np.ones_like(mu) if weights is None else np.asarray(weights, dtype=float)
    g_out = np.empty_like(out)
    g_out[:, 0] = wts * diff / sigma**2
    g_out[:, 1] = wts * (diff**2 / sigma**3 - 1.0 / sigma) * sigmoid(raw)
    grad = backward(net, cache, g_out)
    return (logp, grad, sigma) if return_sigma else (logp, grad)


def value_loss_and_grad(net: NetParams, features, targets, return_pred: bool = False):
    """Mean squared error of the value head and its gradient."""
    out, cache = forward(net, features)
    resid = out[:, 0] - targets
    n = len(resid)
    g_out = (2.0 / n) * resid[:, None]
    loss, grad = float(np.mean(resid**2)), backward(net, cache, g_out)
    return (loss, grad, out[:, 0]) if return_pred else (loss, grad)
