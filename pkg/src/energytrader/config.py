"""Run configuration: one YAML (or JSON) document aggregating every
component's settings, parsed strictly.

Example::

    profile: synthetic
    perturbation: {amplitude: 0.05, seed: 0}
    trainer: {learning_rate: 0.0003, seed: 7}
    curriculum_scale: 0.1
    ledger: {round_duration: 4.0}

Omitted sections take the defaults below. ``RunConfig`` defaults carry the
tuned training recipe; the component dataclasses keep their own documented
defaults so they stay usable on their own.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .env import EnvConfig, RewardWeights
from .ledger import LedgerConfig
from .market import BatterySpec, FleetSpec
from .policy_gradient.curriculum import DEFAULT_SCHEDULE, CurriculumStage, validate_schedule
from .policy_gradient.ppo import TrainerConfig


class ConfigError(ValueError):
    """Unreadable, malformed or invalid configuration."""


TUNED_TRAINER = dict(
    gamma=0.5,
    learning_rate=1e-3,
    epochs_per_batch=10,
    minibatch_size=64,
    max_grad_norm=0.5,
    target_kl=0.1,
    init_action_bias=(3.0, 3.0, 0.0, 0.0),
    init_log_std=(-0.5, -0.5, -0.5, -1.5),
)
TUNED_REWARD = dict(
    w_imbalance=2.0, w_cost=1.0, penalty_invalid=0.1, arbitrage_bonus=0.065, termination_penalty=0.25
)
TUNED_ENV = dict(dispatch_deadband=0.05)


@dataclass(frozen=True)
class PerturbationConfig:
    amplitude: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    profile: str = "synthetic"
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    fleet: FleetSpec = field(default_factory=FleetSpec)
    battery: BatterySpec = field(default_factory=BatterySpec)
    reward: RewardWeights = field(default_factory=lambda: RewardWeights(**TUNED_REWARD))
    env: EnvConfig = field(default_factory=lambda: EnvConfig(**TUNED_ENV))
    trainer: TrainerConfig = field(default_factory=lambda: TrainerConfig(**TUNED_TRAINER))
    curriculum: tuple[CurriculumStage, ...] = DEFAULT_SCHEDULE
    curriculum_scale: float = 1.0
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    episodes: int = 1
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self) -> None:
        if not self.profile:
            raise ValueError("profile must be 'synthetic' or a CSV path")
        if not (math.isfinite(self.curriculum_scale) and self.curriculum_scale > 0):
            raise ValueError("curriculum_scale must be > 0")
        if self.episodes < 1 or self.workers < 1:
            raise ValueError("episodes and workers must be >= 1")
        validate_schedule(self.curriculum)
        if self.env.perturbation_amplitude != self.perturbation.amplitude:
            # the perturbation section is the single source for the amplitude
            object.__setattr__(
                self, "env", dataclasses.replace(self.env, perturbation_amplitude=self.perturbation.amplitude)
            )

    def with_overrides(self, **changes: Any) -> "RunConfig":
        """Copy with top-level fields replaced (``None`` values are ignored)."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if "seed" in changes:
            seed = changes.pop("seed")
            changes["trainer"] = dataclasses.replace(changes.get("trainer", self.trainer), seed=seed)
            changes["perturbation"] = dataclasses.replace(self.perturbation, seed=seed)
        try:
            return dataclasses.replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


_SECTIONS = {
    "perturbation": PerturbationConfig,
    "fleet": FleetSpec,
    "battery": BatterySpec,
    "reward": RewardWeights,
    "env": EnvConfig,
    "trainer": TrainerConfig,
    "ledger": LedgerConfig,
}
# set through the perturbation section only
_HIDDEN = {("env", "perturbation_amplitude")}


def _coerce(value: Any, default: Any, where: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads "3e-4" as a string
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(_coerce(v, 0.0, f"{where}[{i}]") for i, v in enumerate(value))
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: Any, name: str, base):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)} - {k for s, k in _HIDDEN if s == name}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {unknown}")
    kwargs = {k: _coerce(v, getattr(base, k), f"{name}.{k}") for k, v in data.items()}
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _stages(data: Any) -> tuple[CurriculumStage, ...]:
    if not isinstance(data, list) or not data:
        raise ConfigError("curriculum: expected a non-empty list of stages")
    stages = []
    for i, item in enumerate(data):
        stages.append(_build(CurriculumStage, item, f"curriculum[{i}]", DEFAULT_SCHEDULE[0]))
    return tuple(stages)


def from_dict(data: Any) -> RunConfig:
    """Build a validated config; unknown keys anywhere raise :class:`ConfigError`."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    base = RunConfig()
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, key, getattr(base, key))
        elif key == "curriculum":
            kwargs[key] = _stages(value)
        else:
            kwargs[key] = _coerce(value, getattr(base, key), key)
    if "perturbation" in kwargs:
        env = kwargs.get("env", base.env)
        kwargs["env"] = dataclasses.replace(env, perturbation_amplitude=kwargs["perturbation"].amplitude)
    try:
        return RunConfig(**{**{f.name: getattr(base, f.name) for f in dataclasses.fields(RunConfig)}, **kwargs})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def to_dict(config: RunConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(RunConfig):
        value = getattr(config, f.name)
        if f.name in _SECTIONS:
            out[f.name] = {
                k.name: _plain(getattr(value, k.name))
                for k in dataclasses.fields(value)
                if (f.name, k.name) not in _HIDDEN
            }
        elif f.name == "curriculum":
            out[f.name] = [dataclasses.asdict(s) for s in value]
        else:
            out[f.name] = value
    return out


def parse(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return from_dict(data)


def serialize(config: RunConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def load(path: str | Path) -> RunConfig:
    """Read and parse a config file.

    Raises:
        ConfigError: missing or unreadable file, bad syntax, unknown keys or
            values that fail validation.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse(text)
