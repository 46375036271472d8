"""Dense tanh networks with hand-written backprop and the squashed-Gaussian
action distribution.

Parameters live in one ordered ``dict`` of float64 arrays so optimizers,
checkpoints and finite-difference checks can treat them uniformly::

    pi/W0 pi/b0 pi/W1 pi/b1 pi/W2 pi/b2 log_std v/W0 v/b0 v/W1 v/b1 v/W2 v/b2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ACTION_DIM = 4
# first three action dims squash through a sigmoid into [0, 1], the last through tanh into [-1, 1]
N_SIGMOID = 3
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PolicyParameters:
    arrays: dict[str, np.ndarray]

    @classmethod
    def initialize(
        cls,
        obs_dim: int,
        hidden: int,
        rng: np.random.Generator,
        action_dim: int = ACTION_DIM,
        init_log_std=-0.5,
        policy_out_scale: float = 0.01,
        action_bias: np.ndarray | None = None,
    ) -> "PolicyParameters":
        def dense(fan_in, fan_out, scale=1.0):
            return rng.normal(0.0, scale / math.sqrt(fan_in), size=(fan_in, fan_out))

        arrays = {
            "pi/W0": dense(obs_dim, hidden),
            "pi/b0": np.zeros(hidden),
            "pi/W1": dense(hidden, hidden),
            "pi/b1": np.zeros(hidden),
            "pi/W2": dense(hidden, action_dim, policy_out_scale),
            "pi/b2": np.zeros(action_dim) if action_bias is None else np.array(action_bias, dtype=float),
            "log_std": np.broadcast_to(np.asarray(init_log_std, dtype=float), (action_dim,)).copy(),
            "v/W0": dense(obs_dim, hidden),
            "v/b0": np.zeros(hidden),
            "v/W1": dense(hidden, hidden),
            "v/b1": np.zeros(hidden),
            "v/W2": dense(hidden, 1),
            "v/b2": np.zeros(1),
        }
        return cls(arrays)

    def copy(self) -> "PolicyParameters":
        return PolicyParameters({k: v.copy() for k, v in self.arrays.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    @property
    def obs_dim(self) -> int:
        return self.arrays["pi/W0"].shape[0]

    @property
    def hidden(self) -> int:
        return self.arrays["pi/W0"].shape[1]

    @property
    def action_dim(self) -> int:
        return self.arrays["log_std"].shape[0]

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}


def mlp_forward(params: PolicyParameters, prefix: str, x: np.ndarray):
    """Two tanh layers and a linear head; returns output and the cache for backprop."""
    a = params.arrays
    h1 = np.tanh(x @ a[f"{prefix}/W0"] + a[f"{prefix}/b0"])
    h2 = np.tanh(h1 @ a[f"{prefix}/W1"] + a[f"{prefix}/b1"])
    out = h2 @ a[f"{prefix}/W2"] + a[f"{prefix}/b2"]
    return out, (x, h1, h2)


def mlp_backward(params: PolicyParameters, prefix: str, cache, d_out: np.ndarray, grads: dict) -> None:
    """Accumulate d(objective)/d(weights) into ``grads`` given d(objective)/d(output)."""
    a = params.arrays
    x, h1, h2 = cache
    grads[f"{prefix}/W2"] += h2.T @ d_out
    grads[f"{prefix}/b2"] += d_out.sum(axis=0)
    d_z2 = (d_out @ a[f"{prefix}/W2"].T) * (1.0 - h2 * h2)
    grads[f"{prefix}/W1"] += h1.T @ d_z2
    grads[f"{prefix}/b1"] += d_z2.sum(axis=0)
    d_z1 = (d_z2 @ a[f"{prefix}/W1"].T) * (1.0 - h1 * h1)
    grads[f"{prefix}/W0"] += x.T @ d_z1
    grads[f"{prefix}/b0"] += d_z1.sum(axis=0)


def policy_mean(params: PolicyParameters, obs: np.ndarray) -> np.ndarray:
    return mlp_forward(params, "pi", np.atleast_2d(obs))[0]


def value(params: PolicyParameters, obs: np.ndarray) -> np.ndarray:
    return mlp_forward(params, "v", np.atleast_2d(obs))[0][:, 0]


def squash(pre: np.ndarray) -> np.ndarray:
    """Map unbounded samples to dispatch fractions."""
    pre = np.asarray(pre, dtype=float)
    out = np.empty_like(pre)
    out[..., :N_SIGMOID] = 0.5 * (1.0 + np.tanh(0.5 * pre[..., :N_SIGMOID]))
    out[..., N_SIGMOID:] = np.tanh(pre[..., N_SIGMOID:])
    return out


def log_squash_jacobian(pre: np.ndarray) -> np.ndarray:
    """Sum over action dims of ``log |d squash / d pre|``, computed without overflow."""
    pre = np.asarray(pre, dtype=float)
    s = pre[..., :N_SIGMOID]
    t = pre[..., N_SIGMOID:]
    # log sigmoid'(x) = -softplus(x) - softplus(-x)
    log_sig = -np.logaddexp(0.0, s) - np.logaddexp(0.0, -s)
    # log tanh'(x) = 2 (log 2 - x - softplus(-2x))
    log_tanh = 2.0 * (math.log(2.0) - t - np.logaddexp(0.0, -2.0 * t))
    return log_sig.sum(axis=-1) + log_tanh.sum(axis=-1)


def gaussian_log_prob(pre: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (pre - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


def action_log_prob(params: PolicyParameters, obs: np.ndarray, pre: np.ndarray) -> np.ndarray:
    """Log density of the squashed actions ``squash(pre)`` given ``obs``."""
    mean = policy_mean(params, obs)
    pre = np.atleast_2d(pre)
    return gaussian_log_prob(pre, mean, params["log_std"]) - log_squash_jacobian(pre)


def sample_action(
    params: PolicyParameters,
    obs: np.ndarray,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
):
    """Draw one action for a single observation.

    Returns ``(action, pre_squash, log_prob)``. Deterministic mode returns the
    squashed mean, which is the zero-variance limit of the sampler.
    """
    mean = policy_mean(params, obs)[0]
    log_std = params["log_std"]
    if deterministic:
        pre = mean.copy()
    else:
        if rng is None:
            raise ValueError("stochastic sampling needs an rng")
        pre = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    logp = float(gaussian_log_prob(pre, mean, log_std) - log_squash_jacobian(pre))
    return squash(pre), pre, logp


def entropy(log_std: np.ndarray) -> float:
    """Entropy of the pre-squash diagonal Gaussian."""
    return float(np.sum(log_std + 0.5 * (_LOG_2PI + 1.0)))
