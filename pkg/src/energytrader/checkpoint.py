"""Policy checkpoints as deterministic JSON text.

Layout (version 1)::

    {
      "format": "energytrader-checkpoint",
      "version": 1,
      "trainer": {...TrainerConfig fields...},
      "curriculum": {"stages": [[imb, bound, steps], ...], "scale": 0.2,
                     "completed_stages": 5, "timesteps": 66048, "episodes": 2752},
      "params": {"pi/W0": {"shape": [19, 64], "data": [...]}, ...}
    }

Floats are written with ``repr`` so a load/save cycle is exact, and the
same parameters always produce the same bytes.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policy_gradient.curriculum import CurriculumStage
from .policy_gradient.network import PolicyParameters
from .policy_gradient.ppo import TrainerConfig

FORMAT = "energytrader-checkpoint"
VERSION = 1
PARAM_KEYS = (
    "pi/W0", "pi/b0", "pi/W1", "pi/b1", "pi/W2", "pi/b2", "log_std",
    "v/W0", "v/b0", "v/W1", "v/b1", "v/W2", "v/b2",
)


class CheckpointError(ValueError):
    """Missing, unreadable or structurally invalid checkpoint."""


@dataclass(frozen=True)
class CurriculumPosition:
    stages: tuple[CurriculumStage, ...]
    scale: float
    completed_stages: int
    timesteps: int
    episodes: int


@dataclass(frozen=True)
class Checkpoint:
    params: PolicyParameters
    trainer: TrainerConfig
    position: CurriculumPosition


def _trainer_dict(config: TrainerConfig) -> dict:
    out = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def dumps(checkpoint: Checkpoint) -> str:
    pos = checkpoint.position
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "trainer": _trainer_dict(checkpoint.trainer),
        "curriculum": {
            "stages": [[s.imbalance_gap_target_pct, s.best_bound_gap_target_pct, s.timesteps] for s in pos.stages],
            "scale": pos.scale,
            "completed_stages": pos.completed_stages,
            "timesteps": pos.timesteps,
            "episodes": pos.episodes,
        },
        "params": {
            k: {"shape": list(checkpoint.params[k].shape), "data": [float(x) for x in checkpoint.params[k].ravel()]}
            for k in PARAM_KEYS
        },
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def loads(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a checkpoint: missing format marker")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        trainer_doc = dict(doc["trainer"])
        for k in ("init_action_bias", "init_log_std"):
            if isinstance(trainer_doc.get(k), list):
                trainer_doc[k] = tuple(trainer_doc[k])
        trainer = TrainerConfig(**trainer_doc)
        cur = doc["curriculum"]
        position = CurriculumPosition(
            stages=tuple(CurriculumStage(float(a), float(b), int(n)) for a, b, n in cur["stages"]),
            scale=float(cur["scale"]),
            completed_stages=int(cur["completed_stages"]),
            timesteps=int(cur["timesteps"]),
            episodes=int(cur["episodes"]),
        )
        arrays = {}
        for k in PARAM_KEYS:
            entry = doc["params"][k]
            shape = tuple(int(n) for n in entry["shape"])
            data = np.array(entry["data"], dtype=float)
            if data.size != math.prod(shape):
                raise CheckpointError(f"parameter {k}: {data.size} values for shape {shape}")
            arrays[k] = data.reshape(shape)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc!r}") from None
    params = PolicyParameters(arrays)
    if not params.is_finite():
        raise CheckpointError("corrupt checkpoint: non-finite parameters")
    a = params.arrays
    hidden = a["pi/W0"].shape[1]
    expected = {
        "pi/W1": (hidden, hidden), "pi/b0": (hidden,), "pi/b1": (hidden,),
        "pi/W2": (hidden, a["log_std"].shape[0]), "pi/b2": a["log_std"].shape,
        "v/W0": a["pi/W0"].shape, "v/W1": (hidden, hidden), "v/W2": (hidden, 1), "v/b2": (1,),
    }
    for k, shape in expected.items():
        if a[k].shape != shape:
            raise CheckpointError(f"corrupt checkpoint: {k} has shape {a[k].shape}, expected {shape}")
    return Checkpoint(params, trainer, position)


def save(checkpoint: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(checkpoint))
    return path


def load(path: str | Path) -> Checkpoint:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise CheckpointError(f"checkpoint {path} is not UTF-8 text") from None
    return loads(text)
