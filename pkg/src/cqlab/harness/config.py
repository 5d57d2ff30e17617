"""Run configuration dataclasses and their key=value file format.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed. Field types are coerced from the dataclass definitions.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

LOSS_COMBOS = ("M", "M+Div", "M+Colour+Div+Perceptual")


@dataclass
class TrainConfig:
    """Joint training settings. Defaults follow the published recipe:
    temperature 0.01, weights (1, 0.3, 1), SGD with lr 0.05, momentum 0.5,
    weight decay 1e-3, cosine annealing restarting every 10 epochs."""

    colours: int = 2
    tau: float = 0.01
    alpha: float = 1.0
    beta: float = 0.3
    gamma: float = 1.0
    epochs: int = 60
    batch_size: int = 128
    lr: float = 0.05
    momentum: float = 0.5
    weight_decay: float = 0.001
    scheduler: str = "cosine-warm-restart"
    restart_period: int = 10
    seed: int = 0
    query_dim: int = 64
    encoder_width: int = 16
    palette_mode: str = "attention"
    augment: bool = False

    def validate(self) -> None:
        if self.colours < 1:
            raise ValueError("colours must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.scheduler not in ("cosine-warm-restart", "constant"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.palette_mode not in ("attention", "global"):
            raise ValueError(f"unknown palette_mode {self.palette_mode!r}")


@dataclass
class EvolutionConfig:
    """Two-stage colour evolution settings: embed a named colour system,
    then expand by one colour split from a parent term."""

    embedding_epochs: int = 40
    evolution_epochs: int = 20
    tau_embed: float = 1.0
    parent_term: str = "wOO"
    loss_combo: str = "M+Colour+Div+Perceptual"
    embedding_mode: str = "full"  # or "central"
    split_noise: float = 1e-3
    alpha: float = 1.0
    beta: float = 0.3
    gamma: float = 1.0
    batch_size: int = 128
    lr: float = 0.05
    momentum: float = 0.5
    weight_decay: float = 0.001
    restart_period: int = 10
    seed: int = 0
    query_dim: int = 64
    encoder_width: int = 16

    def validate(self, terms: tuple[str, ...] | None = None) -> None:
        if self.embedding_epochs < 0 or self.evolution_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.tau_embed <= 0:
            raise ValueError("tau_embed must be positive")
        if self.loss_combo not in LOSS_COMBOS:
            raise ValueError(f"loss_combo must be one of {LOSS_COMBOS}")
        if self.embedding_mode not in ("full", "central"):
            raise ValueError("embedding_mode must be 'full' or 'central'")
        if terms is not None and self.parent_term not in terms:
            raise ValueError(f"parent term {self.parent_term!r} not among {terms}")


def _coerce(raw: str, target_type):
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    return target_type(raw)


def load_config(path, cls):
    """Parse a key=value file into a TrainConfig or EvolutionConfig."""
    values = {}
    field_types = {f.name: f.type for f in fields(cls)}
    resolved = {f.name: f for f in fields(cls)}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in field_types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            ftype = resolved[key].default.__class__ if resolved[key].default is not dataclasses.MISSING else str
            try:
                values[key] = _coerce(raw.strip(), ftype)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    cfg = cls(**values)
    cfg.validate() if isinstance(cfg, TrainConfig) else cfg.validate(None)
    return cfg


def save_config(path, cfg) -> None:
    with open(path, "w") as f:
        for field in fields(cfg):
            f.write(f"{field.name} = {getattr(cfg, field.name)}\n")
