"""Staged training: progressively tighter imbalance and cost targets."""

from __future__ import annotations

import copy
import csv
import io
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..env import OBS_DIM, CurriculumTargets, DayAheadEnv
from .network import ACTION_DIM, PolicyParameters
from .ppo import TrainerConfig, Trajectory, build_batch, make_optimizer, ppo_update
from .rollout import collect_trajectory, episode_seeds

log = logging.getLogger(__name__)

LOG_COLUMNS = ("stage", "batch", "timesteps", "objective", "clip_fraction", "value_loss", "success_rate")
SUCCESS_WINDOW = 100


@dataclass(frozen=True)
class CurriculumStage:
    imbalance_gap_target_pct: float
    best_bound_gap_target_pct: float
    timesteps: int

    def __post_init__(self) -> None:
        if self.imbalance_gap_target_pct <= 0 or self.best_bound_gap_target_pct <= 0:
            raise ValueError("stage targets must be positive")
        if self.timesteps < 1:
            raise ValueError("stage timesteps must be >= 1")

    @property
    def targets(self) -> CurriculumTargets:
        return CurriculumTargets(self.imbalance_gap_target_pct, self.best_bound_gap_target_pct)


DEFAULT_SCHEDULE: tuple[CurriculumStage, ...] = (
    CurriculumStage(40.0, 40.0, 40_000),
    CurriculumStage(20.0, 30.0, 50_000),
    CurriculumStage(10.0, 20.0, 60_000),
    CurriculumStage(5.0, 10.0, 80_000),
    CurriculumStage(2.0, 10.0, 100_000),
)


def validate_schedule(stages) -> None:
    if not stages:
        raise ValueError("curriculum needs at least one stage")
    for prev, nxt in zip(stages, stages[1:]):
        if nxt.imbalance_gap_target_pct > prev.imbalance_gap_target_pct:
            raise ValueError("imbalance targets must be non-increasing")
        if nxt.best_bound_gap_target_pct > prev.best_bound_gap_target_pct:
            raise ValueError("best-bound targets must be non-increasing")
        if nxt.timesteps < prev.timesteps:
            raise ValueError("stage budgets must be non-decreasing")


def scale_schedule(stages, factor: float) -> tuple[CurriculumStage, ...]:
    """Same targets with every budget multiplied by ``factor`` (at least one step)."""
    if factor <= 0:
        raise ValueError("curriculum scale must be > 0")
    return tuple(
        CurriculumStage(s.imbalance_gap_target_pct, s.best_bound_gap_target_pct, max(1, int(round(s.timesteps * factor))))
        for s in stages
    )


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    stage_targets: list[CurriculumTargets] = field(default_factory=list)
    total_timesteps: int = 0
    episodes: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.rows:
            w.writerow([
                row["stage"],
                row["batch"],
                row["timesteps"],
                repr(row["objective"]),
                repr(row["clip_fraction"]),
                repr(row["value_loss"]),
                repr(row["success_rate"]),
            ])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def episode_succeeded(trajectory: Trajectory, target_pct: float) -> bool:
    """Full-length episode whose mean hourly imbalance gap is within target."""
    gaps = [info["imbalance_gap_pct"] for info in trajectory.infos]
    completed = len(gaps) == 24 and not trajectory.infos[-1]["early_stop"]
    return completed and float(np.mean(gaps)) <= target_pct


def _collect_batch(params, envs, config, first_episode, executor):
    def run(job):
        slot, ep = job
        env_seed, rng = episode_seeds(config.seed, ep)
        return collect_trajectory(params, envs[slot], env_seed, rng)

    jobs = [(i % len(envs), first_episode + i) for i in range(config.batch_trajectories)]
    if executor is None:
        return [run(j) for j in jobs]
    # each slot owns one env; map slots to workers so no env is shared concurrently
    by_slot: dict[int, list] = {}
    for j in jobs:
        by_slot.setdefault(j[0], []).append(j)
    futures = {slot: executor.submit(lambda js: [run(j) for j in js], js) for slot, js in by_slot.items()}
    results = {}
    for slot, fut in futures.items():
        for j, traj in zip(by_slot[slot], fut.result()):
            results[j[1]] = traj
    return [results[first_episode + i] for i in range(config.batch_trajectories)]


def init_params(config: TrainerConfig, obs_dim: int = OBS_DIM) -> PolicyParameters:
    rng = np.random.default_rng(config.seed)
    return PolicyParameters.initialize(
        obs_dim, config.hidden_size, rng, action_dim=ACTION_DIM, init_log_std=config.init_log_std,
        action_bias=np.array(config.init_action_bias, dtype=float),
    )


def train_curriculum(
    env: DayAheadEnv,
    stages=DEFAULT_SCHEDULE,
    config: TrainerConfig | None = None,
    params: PolicyParameters | None = None,
    workers: int = 1,
):
    """Train through ``stages`` in order, carrying parameters across stages.

    A stage ends once cumulative environment steps reach the cumulative budget
    up to and including that stage, so the total overshoots the summed budget
    by less than one batch. Episodes are seeded by their global index, so the
    result is independent of ``workers``.
    """
    config = config or TrainerConfig()
    stages = tuple(stages)
    validate_schedule(stages)
    params = params or init_params(config)
    optimizer = make_optimizer(config)
    update_rng = np.random.default_rng([config.seed, 7])
    workers = max(1, int(workers))
    envs = [env] + [copy.deepcopy(env) for _ in range(workers - 1)]
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    training_log = TrainingLog()
    timesteps = 0
    episode = 0
    batch_no = 0
    budget_end = 0
    try:
        for stage_no, stage in enumerate(stages):
            for e in envs:
                e.set_targets(stage.targets)
            training_log.stage_targets.append(stage.targets)
            budget_end += stage.timesteps
            recent: deque[bool] = deque(maxlen=SUCCESS_WINDOW)
            while timesteps < budget_end:
                trajectories = _collect_batch(params, envs, config, episode, executor)
                episode += len(trajectories)
                timesteps += sum(len(t) for t in trajectories)
                recent.extend(episode_succeeded(t, stage.imbalance_gap_target_pct) for t in trajectories)
                batch = build_batch(trajectories, config.gamma, normalize=config.objective == "ppo_clip")
                params, stats = ppo_update(params, batch, config, optimizer, update_rng)
                row = {
                    "stage": stage_no,
                    "batch": batch_no,
                    "timesteps": timesteps,
                    "objective": stats["objective"],
                    "clip_fraction": stats["clip_fraction"],
                    "value_loss": stats["value_loss"],
                    "success_rate": float(np.mean(recent)),
                }
                training_log.rows.append(row)
                batch_no += 1
                if batch_no % 20 == 0:
                    log.info(
                        "stage %d batch %d steps %d success %.2f value_loss %.4f",
                        stage_no, batch_no, timesteps, row["success_rate"], row["value_loss"],
                    )
    finally:
        if executor is not None:
            executor.shutdown()
    training_log.total_timesteps = timesteps
    training_log.episodes = episode
    return params, training_log
