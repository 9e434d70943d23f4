#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Training configuration and hyperparameter grids
"""

import itertools
import logging
from dataclasses import asdict, dataclass, fields, replace as dc_replace
from typing import Any, Dict, Iterator, List, Mapping, Sequence

import yaml
from yaml.parser import ParserError

from errors import ConfigError

logger = logging.getLogger(__name__)

# Search ranges for grid search
DEFAULT_GRID: Dict[str, List[float]] = {
    "memory_dim": [16, 32, 64, 128, 256],
    "eta": [0.1, 0.3, 0.5, 0.7, 0.9],
    "alpha": [0.1, 0.3, 0.5, 0.7, 0.9],
    "beta": [0.1, 0.3, 0.5, 0.7, 0.9],
    "lam": [0.1, 0.01, 0.001],
    "delta": [0.1, 0.01, 0.001],
}

_UNIT_INTERVAL = ("eta", "alpha", "beta", "noise_level")
_NON_NEGATIVE = ("lam", "delta", "phi", "psi")
INT_FIELDS = ("latent_dim", "memory_dim", "lr_decay_every", "epochs", "batch_size", "neg_ratio", "seed")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run"""

    latent_dim: int = 64
    memory_dim: int = 64
    eta: float = 0.7
    alpha: float = 0.5
    beta: float = 0.5
    lam: float = 0.01
    delta: float = 0.01
    phi: float = 0.5
    psi: float = 0.5
    learning_rate: float = 0.01
    lr_decay: float = 0.5
    lr_decay_every: int = 50
    epochs: int = 100
    batch_size: int = 128
    neg_ratio: int = 5
    noise_level: float = 0.2
    seed: int = 42

    def __post_init__(self):
        for f in fields(self):
            if f.name in INT_FIELDS:
                continue
            value = getattr(self, f.name)
            # YAML 1.1 reads "1e-2" as a string
            if isinstance(value, str):
                try:
                    object.__setattr__(self, f.name, float(value))
                except ValueError:
                    raise ConfigError(f"{f.name} must be a number, got {value!r}") from None
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{f.name} must be a number, got {value!r}")
        for name in INT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in _UNIT_INTERVAL:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        for name in _NON_NEGATIVE:
            value = getattr(self, name)
            if value < 0:
                raise ConfigError(f"{name} must be nonnegative, got {value}")
        if self.latent_dim < 1 or self.memory_dim < 1:
            raise ConfigError(f"latent_dim and memory_dim must be positive, got {self.latent_dim}, {self.memory_dim}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.lr_decay_every < 0:
            raise ConfigError(f"lr_decay_every must be nonnegative, got {self.lr_decay_every}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.neg_ratio < 1:
            raise ConfigError(f"neg_ratio must be at least 1, got {self.neg_ratio}")

    def learning_rate_at(self, epoch: int) -> float:
        """Step-decayed learning rate for a zero-based epoch"""
        if self.lr_decay_every == 0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def replace(self, **overrides: Any) -> "TrainConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        return dc_replace(self, **overrides)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        return cls().replace(**dict(values))

    @classmethod
    def from_yaml(cls, path: str) -> "TrainConfig":
        """Load a config file; keys left out keep their defaults"""
        try:
            with open(path, "r", encoding="utf-8") as file:
                values = yaml.safe_load(file) or {}
        except ParserError as e:
            raise ConfigError(f"Cannot parse {path}: {e}") from e
        if not isinstance(values, dict):
            raise ConfigError(f"{path} must hold a mapping of hyperparameters")
        logger.info(f"Loaded training config from {path}")
        return cls.from_dict(values)

    def to_yaml(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            yaml.safe_dump(self.to_dict(), file, sort_keys=False)


def grid_size(grid: Mapping[str, Sequence[Any]] = DEFAULT_GRID) -> int:
    """Number of combinations in a grid"""
    size = 1
    for values in grid.values():
        size *= len(values)
    return size


def iter_grid(grid: Mapping[str, Sequence[Any]]) -> Iterator[Dict[str, Any]]:
    """Combinations in a fixed order: keys as given, last key varying fastest"""
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, combo))
