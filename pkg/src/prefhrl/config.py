"""Run configuration: one flat dataclass mirrored by a key=value config file."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

LABELER_KINDS = ("oracle", "human", "fallback")


@dataclass
class TrainConfig:
    """Every tunable of a training run.  Defaults follow the reference setup."""

    env: str = "four-rooms"
    seed: int = 0
    episodes: int = 5000
    labeler: str = "oracle"

    # iteration counts per episode/cadence
    eval_rollouts: int = 10        # N1: subgoal-success probes per cadence
    high_updates: int = 40         # N2: high-level gradient rounds per episode
    low_updates: int = 40          # N3: low-level gradient rounds per episode

    # high-level policy
    high_actor_lr: float = 3e-4
    high_critic_lr: float = 3e-4
    high_buffer_size: int = 1_000_000
    high_batch_size: int = 256
    high_hidden_size: int = 256
    high_hidden_layers: int = 3
    tau: float = 0.005
    gamma: float = 0.95
    beta: float = 0.1

    # constraint curriculum and dual variable
    alpha_lr: float = 5e-3
    alpha_init: float = 1.0
    k_init: float = 0.05
    delta_k: float = 0.05
    k_min: float = 0.05
    k_max: float = 0.95
    success_high_threshold: float = 0.6
    success_rate_smoothing: float = 0.25  # EMA weight of fresh probe rates
    success_low_threshold: float = 0.3

    # distance model
    distance_lr: float = 3e-4
    distance_buffer_size: int = 1000
    distance_hidden_size: int = 256
    distance_hidden_layers: int = 3
    distance_batch_size: int = 256
    distance_steps: int = 4   # gradient steps per episode on the pair pool
    distance_pairs_per_segment: int = 64
    distance_unreached_pairs: int = 16

    # preference reward model
    reward_lr: float = 3e-4
    reward_buffer_size: int = 1000
    reward_hidden_size: int = 256
    reward_hidden_layers: int = 3
    reward_batch_size: int = 256
    reward_epochs: int = 20
    query_frequency: int = 50
    batch_queries: int = 50
    label_timeout_s: float = 300.0

    # low-level policy
    low_actor_lr: float = 1e-3
    low_critic_lr: float = 1e-3
    low_hidden_size: int = 256
    low_hidden_layers: int = 3
    low_buffer_size: int = 1_000_000
    low_batch_size: int = 512
    hindsight_ratio: float = 0.8

    # novelty bonus
    rnd_lr: float = 3e-4
    rnd_hidden_size: int = 256
    rnd_hidden_layers: int = 3
    rnd_represent_size: int = 512
    rnd_bonus_scale: float = 1.0

    # exploration noise (exploration policy only)
    epsilon_start: float = 0.2
    epsilon_final: float = 0.05
    epsilon_decay_episodes: int = 500
    action_noise: float = 0.1

    near_policy_episodes: int = 10

    # evaluation of the full task
    eval_frequency: int = 25
    eval_episodes: int = 50
    stop_on_success: bool = False

    # ablations
    no_hf: bool = False
    no_ddc: bool = False
    no_eed: bool = False

    # artifacts
    out_dir: str = "runs"
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    include_buffers_in_checkpoint: bool = False
    serve_port: int = 0  # 0 disables the annotation service

    def validate(self) -> "TrainConfig":
        from .envs import ENV_KINDS

        if self.env not in ENV_KINDS:
            raise ValueError(f"unknown env {self.env!r}")
        if self.labeler not in LABELER_KINDS:
            raise ValueError(f"unknown labeler {self.labeler!r}")
        positive = (
            "episodes", "eval_rollouts", "high_updates", "low_updates",
            "high_buffer_size", "high_batch_size", "low_buffer_size",
            "low_batch_size", "query_frequency", "eval_frequency",
            "eval_episodes", "reward_buffer_size", "distance_buffer_size",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_queries < 0:
            raise ValueError("batch_queries must be nonnegative")
        if not 0.0 <= self.hindsight_ratio <= 1.0:
            raise ValueError("hindsight_ratio must lie in [0, 1]")
        return self


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def _coerce(raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        word = raw.lower()
        if word not in _BOOL_WORDS:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def load_config(path, overrides: Optional[dict] = None) -> TrainConfig:
    """Parse a flat `key = value` config file; unknown keys are rejected."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    type_of = {f.name: type(getattr(TrainConfig(), f.name)) for f in fields(TrainConfig)}
    values: dict = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(raw, type_of[key])
    if overrides:
        values.update(overrides)
    return TrainConfig(**values).validate()


def config_to_text(cfg: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(TrainConfig)]
    return "\n".join(lines) + "\n"
