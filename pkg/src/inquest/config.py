"""Configuration dataclasses and TOML loading for the whole system."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class EnvConfig:
    """Synthetic scene generator and oracle settings."""

    slots: int = 8  # fixed object-slot count the model is sized for
    min_objects: int = 4
    max_objects: int = 8
    n_categories: int = 6
    n_colors: int = 4
    # categories active per scene; drawing objects from a small palette
    # makes category questions prune gradually, like crowded real images
    min_scene_categories: int = 2
    max_scene_categories: int = 3
    category_dim: int = 8
    color_dim: int = 5
    size_dim: int = 3
    noise_sigma: float = 0.1
    env_seed: int = 7  # derives attribute feature vectors and the taxonomy
    oracle_noise_p: float = 0.0

    @property
    def static_dim(self) -> int:
        return self.category_dim + self.color_dim + self.size_dim

    @property
    def feature_dim(self) -> int:
        return self.static_dim + 8

    def validate(self) -> None:
        if not (2 <= self.min_objects <= self.max_objects <= self.slots):
            raise ConfigError(
                f"object count range {self.min_objects}..{self.max_objects} "
                f"must fit 2..slots ({self.slots})"
            )
        if self.n_categories < 1 or self.n_colors < 1:
            raise ConfigError("need at least one category and one color")
        if not (1 <= self.min_scene_categories <= self.max_scene_categories <= self.n_categories):
            raise ConfigError(
                "scene category palette range must fit 1..n_categories"
            )
        if not (0.0 <= self.oracle_noise_p <= 1.0):
            raise ConfigError("oracle_noise_p must be a probability")


@dataclass(frozen=True)
class AblationConfig:
    """Switches that disable parts of the questioner for ablation runs."""

    disable_state_tracking: bool = False  # freeze belief + object reps
    disable_difference_attention: bool = False  # mean objects instead of attention

    def label(self) -> str:
        if self.disable_state_tracking and self.disable_difference_attention:
            return "-tracking-attention"
        if self.disable_state_tracking:
            return "-tracking"
        if self.disable_difference_attention:
            return "-attention"
        return "full"


@dataclass(frozen=True)
class ModelConfig:
    """Questioner architecture sizes."""

    embed_dim: int = 64  # shared width of object reps, word embeddings, hidden state
    glimpses: int = 2
    scale_by_slots: bool = True  # multiply belief-weighted rows by slot count
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> None:
        if self.embed_dim < 1 or self.glimpses < 1:
            raise ConfigError("embed_dim and glimpses must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Supervised pre-training, policy-gradient fine-tuning, guesser training."""

    max_questions: int = 5
    max_words: int = 12
    sl_games: int = 2000
    sl_epochs: int = 50
    sl_lr: float = 2.5e-3  # paper's 1e-4 cannot converge in 50 epochs at desk scale
    sl_batch: int = 64
    rl_epochs: int = 200
    rl_games: int = 1000  # scenes per policy-gradient epoch
    rl_lr: float = 1e-3
    rl_batch: int = 64
    baseline_decay: float = 0.99
    clip_norm: float = 5.0
    rl_validate_every: int = 10  # epochs between greedy validation passes
    rl_validation_games: int = 150  # retargeted training scenes held for validation
    guesser_games: int = 6000
    guesser_epochs: int = 30
    guesser_lr: float = 1e-3
    guesser_batch: int = 64
    guesser_hidden: int = 64
    # fraction of guesser games played by the detouring script, and the
    # per-round detour probability; off-script dialogues (repeats, filler)
    # keep the guesser robust to imperfect questioners
    guesser_noisy_fraction: float = 0.4
    guesser_detour_p: float = 0.35
    checkpoint_every: int = 0  # epochs between periodic checkpoints; 0 disables
    seed: int = 0

    def validate(self) -> None:
        if self.max_questions < 0:
            raise ConfigError("max_questions must be >= 0")
        if self.max_words < 1:
            raise ConfigError("max_words must be >= 1")
        for name in (
            "sl_games",
            "sl_epochs",
            "sl_batch",
            "rl_epochs",
            "rl_games",
            "rl_batch",
            "guesser_games",
            "guesser_epochs",
            "guesser_batch",
            "guesser_hidden",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("sl_lr", "rl_lr", "guesser_lr", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 <= self.baseline_decay < 1.0):
            raise ConfigError("baseline_decay must be in [0, 1)")


@dataclass(frozen=True)
class AppConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "AppConfig":
        self.env.validate()
        self.model.validate()
        self.train.validate()
        return self


def _apply_section(base, values: dict[str, Any]):
    known = {f.name for f in fields(base)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return replace(base, **values)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> AppConfig:
    """Build an AppConfig from defaults, an optional TOML file, then overrides.

    The TOML file and the overrides dict both use sections ``env``, ``model``,
    ``train``; ``model.ablation`` holds the ablation switches.
    """
    cfg = AppConfig()
    for source in (_read_toml(path), overrides or {}):
        if not source:
            continue
        unknown = set(source) - {"env", "model", "train"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "env" in source:
            cfg = replace(cfg, env=_apply_section(cfg.env, source["env"]))
        if "model" in source:
            model_values = dict(source["model"])
            ablation = model_values.pop("ablation", None)
            model = _apply_section(cfg.model, model_values)
            if ablation is not None:
                model = replace(model, ablation=_apply_section(model.ablation, ablation))
            cfg = replace(cfg, model=model)
        if "train" in source:
            cfg = replace(cfg, train=_apply_section(cfg.train, source["train"]))
    return cfg.validate()


def _read_toml(path: str | Path | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from exc
