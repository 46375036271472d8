"""Episode collection and deterministic policy evaluation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..env import DayAheadEnv
from ..evaluation import HourlyEvaluation, RunSummary, summarize
from ..market import DispatchAction
from .network import PolicyParameters, sample_action, value
from .ppo import Trajectory

EVAL_SEED_BASE = 1_000_000


def episode_seeds(seed: int, episode: int) -> tuple[int, np.random.Generator]:
    """Profile-perturbation seed and action RNG for one training episode.

    Both depend only on ``(seed, episode)``, so collection order and worker
    count never change what an episode sees.
    """
    ss = np.random.SeedSequence([seed, episode])
    env_seed = int(ss.generate_state(1)[0])
    return env_seed, np.random.default_rng(ss.spawn(1)[0])


def collect_trajectory(
    params: PolicyParameters,
    env: DayAheadEnv,
    env_seed: int,
    rng: np.random.Generator | None,
    deterministic: bool = False,
) -> Trajectory:
    state = env.reset(env_seed)
    obs, pre, logps, rewards, infos = [], [], [], [], []
    done = False
    while not done:
        x = env.observe_vector(state)
        action, u, logp = sample_action(params, x, rng, deterministic)
        result = env.step(DispatchAction.from_array(action))
        obs.append(x)
        pre.append(u)
        logps.append(logp)
        rewards.append(result.reward)
        infos.append(result.info)
        state, done = result.observation, result.done
    states = np.array(obs)
    return Trajectory(
        states=states,
        pre_actions=np.array(pre),
        log_probs=np.array(logps),
        rewards=np.array(rewards),
        values=value(params, states),
        infos=infos,
    )


@dataclass(frozen=True)
class EvaluationSummary:
    """Per-episode hourly records and the pooled run summary."""

    episodes: tuple[tuple[HourlyEvaluation, ...], ...]
    summary: RunSummary
    rewards: tuple[float, ...]
    violations: int

    @property
    def hours(self) -> tuple[HourlyEvaluation, ...]:
        return tuple(h for ep in self.episodes for h in ep)


def hourly_record(info: dict) -> HourlyEvaluation:
    d = info["dispatch"]
    return HourlyEvaluation(
        hour=info["hour"],
        demand=info["effective_demand"],
        supply=info["supply"],
        actual_cost=info["supply_cost"],
        best_bound=info["best_bound"],
        soc=info["soc"],
        solar_mwh=d.solar_mwh,
        wind_mwh=d.wind_mwh,
        conventional_mwh=d.conventional_mwh,
        battery_net_mwh=d.battery_net_mwh,
        price=info["price"],
    )


def evaluate_policy(
    params: PolicyParameters,
    env: DayAheadEnv,
    episodes: int = 1,
    deterministic: bool = True,
    seed: int = 0,
) -> EvaluationSummary:
    """Run full 24-hour episodes with early stopping disabled.

    Episode ``i`` perturbs the profile with seed ``EVAL_SEED_BASE + seed + i``;
    stochastic mode draws actions from an RNG seeded with ``seed``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    saved = env.config
    env.config = dataclasses.replace(saved, early_stop=False)
    rng = None if deterministic else np.random.default_rng(seed)
    try:
        runs, rewards, n_viol = [], [], 0
        for i in range(episodes):
            traj = collect_trajectory(params, env, EVAL_SEED_BASE + seed + i, rng, deterministic)
            runs.append(tuple(hourly_record(info) for info in traj.infos))
            rewards.append(float(traj.rewards.sum()))
            n_viol += sum(len(info["violations"]) for info in traj.infos)
    finally:
        env.config = saved
    pooled = [h for ep in runs for h in ep]
    return EvaluationSummary(tuple(runs), summarize(pooled), tuple(rewards), n_viol)
