"""Experiment configuration: a strict JSON-backed dataclass tree.

Loading rejects unknown keys anywhere in the tree so a typo in a config file
fails loudly instead of silently running defaults. Serialization is canonical
(sorted keys, fixed separators), and the config hash is the sha256 of that
canonical form, so equal configs hash equal across runs and machines.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import canonical_json
from .envs import BEHAVIOR_KINDS, ENV_KINDS, EnvSpec
from .errors import ConfigError

METHODS = ("clam", "bc-al", "vpt", "lapo")


@dataclass
class LamSettings:
    latent_dim: object = None  # None resolves to 2 * action_dim at fit time
    context: int = 1
    trunk: str = "mlp"
    hidden_dim: int = 256
    n_hidden: int = 2
    dec_hidden_dim: int = 256
    dec_n_hidden: int = 2
    model_dim: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ff_dim: int = 256
    dropout: float = 0.0
    latent_mode: str = "continuous"
    codebook_size: int = 2
    commitment_weight: float = 0.25
    beta: float = 1.0
    joint_training: bool = True
    labeled_updates_train_idm: bool = True
    steps: int = 2000
    decoder_steps: object = None
    batch_size: int = 128
    lr: float = 1e-3
    include_padded_windows: bool = False
    full_scale: bool = False


@dataclass
class PolicySettings:
    hidden_dim: int = 256
    n_hidden: int = 2
    steps: int = 1500
    batch_size: int = 128
    lr: float = 1e-3
    init_from: str = "fresh"


@dataclass
class ExperimentConfig:
    env: str = "reacher-2link"
    method: str = "clam"
    n_unlabeled: int = 200
    n_labeled: int = 50
    labeled_policy: str = "random"
    eval_episodes: int = 100
    seed: int = 0
    lam: LamSettings = field(default_factory=LamSettings)
    policy: PolicySettings = field(default_factory=PolicySettings)

    def __post_init__(self):
        if self.env not in ENV_KINDS:
            raise ConfigError(f"env must be one of {ENV_KINDS}, got {self.env!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.labeled_policy not in BEHAVIOR_KINDS:
            raise ConfigError(f"labeled_policy must be one of {BEHAVIOR_KINDS}, "
                              f"got {self.labeled_policy!r}")
        for name in ("n_unlabeled", "n_labeled", "eval_episodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def env_spec(self) -> EnvSpec:
        return EnvSpec(self.env)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_canonical_json(self) -> str:
        return canonical_json(self.to_dict())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_canonical_json().encode()).hexdigest()[:16]


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        if name == "lam":
            kwargs[name] = _build(LamSettings, value, f"{where}.lam")
        elif name == "policy":
            kwargs[name] = _build(PolicySettings, value, f"{where}.policy")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(path, config: ExperimentConfig) -> None:
    Path(path).write_text(config.to_canonical_json() + "\n")
