"""PPO learner, rollout and curriculum driver."""

from .curriculum import (
    DEFAULT_SCHEDULE,
    CurriculumStage,
    TrainingLog,
    init_params,
    scale_schedule,
    train_curriculum,
    validate_schedule,
)
from .network import PolicyParameters, sample_action, squash
from .ppo import (
    Batch,
    TrainerConfig,
    TrainingDivergence,
    Trajectory,
    build_batch,
    discounted_return,
    ppo_objective,
    ppo_update,
    returns_to_go,
    trajectory_log_prob,
)
from .rollout import EvaluationSummary, collect_trajectory, evaluate_policy

__all__ = [
    "DEFAULT_SCHEDULE",
    "Batch",
    "CurriculumStage",
    "EvaluationSummary",
    "PolicyParameters",
    "TrainerConfig",
    "TrainingDivergence",
    "TrainingLog",
    "Trajectory",
    "build_batch",
    "collect_trajectory",
    "discounted_return",
    "evaluate_policy",
    "init_params",
    "ppo_objective",
    "ppo_update",
    "returns_to_go",
    "sample_action",
    "scale_schedule",
    "squash",
    "train_curriculum",
    "trajectory_log_prob",
    "validate_schedule",
]
