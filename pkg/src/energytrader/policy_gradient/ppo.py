"""Clipped-surrogate PPO (and a plain REINFORCE mode) over squashed-Gaussian
policies, with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import (
    PolicyParameters,
    action_log_prob,
    entropy,
    gaussian_log_prob,
    log_squash_jacobian,
    mlp_backward,
    mlp_forward,
)

OBJECTIVES = ("ppo_clip", "reinforce")
OPTIMIZERS = ("adam", "sgd")


class TrainingDivergence(RuntimeError):
    """A gradient or parameter became non-finite; the update was discarded."""


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.99
    learning_rate: float = 3e-4
    clip_epsilon: float = 0.2
    batch_trajectories: int = 16
    epochs_per_batch: int = 4
    minibatch_size: int = 0
    hidden_size: int = 64
    entropy_coeff: float = 0.0
    value_coeff: float = 0.5
    objective: str = "ppo_clip"
    optimizer: str = "adam"
    max_grad_norm: float = 0.0
    # stop a batch's epochs early once the approximate KL from the collecting policy exceeds 1.5x this; 0 disables
    target_kl: float = 0.0
    # one value for all action dims or one per dim
    init_log_std: float | tuple[float, ...] = -0.5
    # initial pre-squash action means: renewables start off, conventional at half
    init_action_bias: tuple[float, float, float, float] = (-3.5, -3.5, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")
        if self.batch_trajectories < 1 or self.epochs_per_batch < 1 or self.hidden_size < 1:
            raise ValueError("batch_trajectories, epochs_per_batch and hidden_size must be >= 1")
        if self.minibatch_size < 0 or self.max_grad_norm < 0 or self.target_kl < 0:
            raise ValueError("minibatch_size, max_grad_norm and target_kl must be >= 0")
        if self.entropy_coeff < 0 or self.value_coeff < 0:
            raise ValueError("entropy_coeff and value_coeff must be >= 0")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not isinstance(self.init_log_std, (int, float)) and len(self.init_log_std) != 4:
            raise ValueError("init_log_std needs one entry per action dimension")
        if len(self.init_action_bias) != 4:
            raise ValueError("init_action_bias needs one entry per action dimension")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass
class Trajectory:
    """One episode: policy inputs, pre-squash samples, collection-time
    log-probs and value estimates, and rewards."""

    states: np.ndarray
    pre_actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    infos: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)


def discounted_return(rewards, gamma: float) -> float:
    """``sum_i r_i * gamma**i``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    total = 0.0
    for r in reversed(list(rewards)):
        total = float(r) + gamma * total
    return total


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    running = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        running = rewards[i] + gamma * running
        out[i] = running
    return out


def trajectory_log_prob(params: PolicyParameters, trajectory: Trajectory) -> float:
    """Policy factor of the trajectory log-likelihood.

    Initial-state and transition probabilities do not depend on the policy
    weights and are left out.
    """
    if len(trajectory) == 0:
        return 0.0
    return float(np.sum(action_log_prob(params, trajectory.states, trajectory.pre_actions)))


@dataclass
class Batch:
    """Flattened steps of several trajectories plus per-step training targets."""

    states: np.ndarray
    pre_actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    # REINFORCE weights: the owning trajectory's full return, and trajectory ids
    episode_returns: np.ndarray
    episode_index: np.ndarray
    n_episodes: int

    def __len__(self) -> int:
        return len(self.returns)

    def subset(self, idx: np.ndarray) -> "Batch":
        return Batch(
            self.states[idx],
            self.pre_actions[idx],
            self.log_probs_old[idx],
            self.advantages[idx],
            self.returns[idx],
            self.episode_returns[idx],
            self.episode_index[idx],
            self.n_episodes,
        )


def build_batch(trajectories: list[Trajectory], gamma: float, normalize: bool = True) -> Batch:
    """Return-to-go targets and baseline-subtracted advantages.

    Advantages are standardized over the batch unless their variance is below
    1e-8.
    """
    if not trajectories:
        raise ValueError("batch must contain at least one trajectory")
    rtg = [returns_to_go(t.rewards, gamma) for t in trajectories]
    returns = np.concatenate(rtg)
    values = np.concatenate([t.values for t in trajectories])
    adv = returns - values
    if normalize and adv.size and adv.var() >= 1e-8:
        adv = (adv - adv.mean()) / adv.std()
    ep_ret = np.concatenate([np.full(len(t), discounted_return(t.rewards, gamma)) for t in trajectories])
    ep_idx = np.concatenate([np.full(len(t), i) for i, t in enumerate(trajectories)])
    return Batch(
        states=np.concatenate([t.states for t in trajectories]),
        pre_actions=np.concatenate([t.pre_actions for t in trajectories]),
        log_probs_old=np.concatenate([t.log_probs for t in trajectories]),
        advantages=adv,
        returns=returns,
        episode_returns=ep_ret,
        episode_index=ep_idx.astype(int),
        n_episodes=len(trajectories),
    )


def ppo_objective(params: PolicyParameters, batch: Batch, config: TrainerConfig, with_grad: bool = True):
    """Total objective, its gradient and diagnostics.

    ``ppo_clip``: mean over steps of ``min(rho*A, clip(rho, 1-eps, 1+eps)*A)``.
    ``reinforce``: mean over trajectories of ``log p(tau) * R(tau)``.
    Both subtract ``value_coeff * MSE(V, return-to-go)`` and add
    ``entropy_coeff * entropy``.
    """
    n = len(batch)
    a = params.arrays
    log_std = a["log_std"]
    mean, pi_cache = mlp_forward(params, "pi", batch.states)
    v_out, v_cache = mlp_forward(params, "v", batch.states)
    v = v_out[:, 0]

    # the squash Jacobian is weight-independent, so it cancels in ratios and gradients
    logp = gaussian_log_prob(batch.pre_actions, mean, log_std) - log_squash_jacobian(batch.pre_actions)

    eps = config.clip_epsilon
    stats: dict[str, float] = {}
    if config.objective == "ppo_clip":
        ratio = np.exp(logp - batch.log_probs_old)
        adv = batch.advantages
        unclipped = ratio * adv
        clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
        surrogate = np.minimum(unclipped, clipped)
        policy_term = float(surrogate.mean())
        # gradient flows only where the unclipped branch is the active minimum
        active = unclipped <= clipped
        d_logp = np.where(active, unclipped, 0.0) / n
        stats["mean_ratio"] = float(ratio.mean())
        log_ratio = logp - batch.log_probs_old
        stats["approx_kl"] = float(np.mean(np.expm1(log_ratio) - log_ratio))
        stats["clip_fraction"] = float(np.mean(np.abs(ratio - 1.0) > eps))
    else:
        k = batch.n_episodes
        policy_term = float(np.sum(logp * batch.episode_returns) / k)
        d_logp = batch.episode_returns / k
        log_ratio = logp - batch.log_probs_old
        stats["mean_ratio"] = float(np.mean(np.exp(log_ratio)))
        stats["approx_kl"] = float(np.mean(np.expm1(log_ratio) - log_ratio))
        stats["clip_fraction"] = 0.0

    value_loss = float(np.mean((v - batch.returns) ** 2))
    ent = entropy(log_std)
    total = policy_term - config.value_coeff * value_loss + config.entropy_coeff * ent
    stats.update(objective=policy_term, value_loss=value_loss, entropy=ent, total=total)
    if not with_grad:
        return total, None, stats

    grads = params.zeros_like()
    inv_var = np.exp(-2.0 * log_std)
    diff = batch.pre_actions - mean
    # d logN / d mean = (u - mu) / sigma^2 ; d logN / d log_std = (u - mu)^2 / sigma^2 - 1
    d_mean = d_logp[:, None] * diff * inv_var
    grads["log_std"] += np.sum(d_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    grads["log_std"] += config.entropy_coeff
    mlp_backward(params, "pi", pi_cache, d_mean, grads)
    d_v = (-config.value_coeff * 2.0 / n) * (v - batch.returns)
    mlp_backward(params, "v", v_cache, d_v[:, None], grads)
    return total, grads, stats


class Adam:
    """Adam ascent on a parameter dict."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: PolicyParameters, grads: dict[str, np.ndarray]) -> PolicyParameters:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for name, g in grads.items():
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            out[name] = params.arrays[name] + self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return PolicyParameters(out)

    def snapshot(self):
        return self.t, dict(self.m), dict(self.v)

    def restore(self, state) -> None:
        self.t, self.m, self.v = state[0], dict(state[1]), dict(state[2])


class GradientAscent:
    """Plain ``theta <- theta + lr * grad``."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: PolicyParameters, grads: dict[str, np.ndarray]) -> PolicyParameters:
        return PolicyParameters({k: params.arrays[k] + self.learning_rate * g for k, g in grads.items()})

    def snapshot(self):
        return None

    def restore(self, state) -> None:
        pass


def make_optimizer(config: TrainerConfig):
    if config.optimizer == "adam":
        return Adam(config.learning_rate)
    return GradientAscent(config.learning_rate)


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    if max_norm <= 0:
        return grads
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def ppo_update(
    params: PolicyParameters,
    batch: list[Trajectory] | Batch,
    config: TrainerConfig,
    optimizer=None,
    rng: np.random.Generator | None = None,
):
    """Run ``epochs_per_batch`` ascent passes over the batch.

    With ``target_kl > 0`` the remaining epochs are skipped once the
    full-batch approximate KL exceeds ``1.5 * target_kl``.

    Returns ``(new_params, stats)`` where stats come from the last pass (or
    the full-batch check that stopped the loop). The input parameters are
    never modified; a non-finite gradient raises
    :class:`TrainingDivergence` and discards the whole update.
    """
    if not isinstance(batch, Batch):
        batch = build_batch(batch, config.gamma, normalize=config.objective == "ppo_clip")
    if len(batch) == 0:
        raise ValueError("empty batch")
    optimizer = optimizer or make_optimizer(config)
    rng = rng or np.random.default_rng(config.seed)
    current = params
    n = len(batch)
    mb = config.minibatch_size if 0 < config.minibatch_size < n else n
    stats: dict[str, float] = {}
    saved = optimizer.snapshot()
    try:
        for _ in range(config.epochs_per_batch):
            order = rng.permutation(n) if mb < n else np.arange(n)
            for start in range(0, n, mb):
                sub = batch if mb == n else batch.subset(order[start : start + mb])
                _, grads, stats = ppo_objective(current, sub, config)
                if not all(np.all(np.isfinite(g)) for g in grads.values()):
                    raise TrainingDivergence("non-finite gradient; update discarded")
                current = optimizer.step(current, _clip_grads(grads, config.max_grad_norm))
                if not current.is_finite():
                    raise TrainingDivergence("non-finite parameters after step; update discarded")
            if config.target_kl > 0:
                _, _, full = ppo_objective(current, batch, config, with_grad=False)
                if full["approx_kl"] > 1.5 * config.target_kl:
                    stats = full
                    break
    except TrainingDivergence:
        optimizer.restore(saved)
        raise
    return current, stats
