"""Model and training configuration.

The thirteen tuned hyperparameters plus the architecture switches. Defaults
are the tuned values of the 5x+10x baseline graph model.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .graphbuild import FeatureSpaceMode

TUNED_FIELDS = (
    "learning_rate", "lr_decay", "lr_patience",
    "beta1", "beta2", "epsilon",
    "dropout", "weight_decay", "max_patches",
    "message_passings", "graph_poolings", "pooling_factor", "embedding_size",
)
_INT_FIELDS = {
    "lr_patience", "max_patches", "message_passings", "graph_poolings",
    "embedding_size", "seed", "max_epochs", "early_stop_patience", "attention_heads",
}


@dataclass
class ModelConfig:
    learning_rate: float = 1e-4
    lr_decay: float = 0.9
    lr_patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.9999
    epsilon: float = 1e-5
    dropout: float = 0.2
    weight_decay: float = 1e-2
    max_patches: int = 6000
    message_passings: int = 3
    graph_poolings: int = 4
    pooling_factor: float = 0.9
    embedding_size: int = 512
    feature_space_mode: str = "concat_avg"
    magnifications: list = field(default_factory=lambda: [5.0, 10.0])
    seed: int = 0
    max_epochs: int = 100
    early_stop_patience: int | None = None
    attention_heads: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def mode(self) -> FeatureSpaceMode:
        return FeatureSpaceMode(self.feature_space_mode)

    @property
    def stop_patience(self) -> int:
        if self.early_stop_patience is None:
            return 3 * self.lr_patience
        return self.early_stop_patience

    def validate(self) -> None:
        for name in _INT_FIELDS:
            value = getattr(self, name)
            if value is None and name == "early_stop_patience":
                continue
            if isinstance(value, bool) or not isinstance(value, int):
                if isinstance(value, float) and value.is_integer():
                    setattr(self, name, int(value))
                else:
                    raise ConfigError(f"{name} must be an integer, got {value!r}")
        checks = [
            ("learning_rate", self.learning_rate > 0, "must be positive"),
            ("lr_decay", 0 < self.lr_decay <= 1, "must lie in (0, 1]"),
            ("lr_patience", self.lr_patience >= 1, "must be >= 1"),
            ("beta1", 0 < self.beta1 < 1, "must lie in (0, 1)"),
            ("beta2", 0 < self.beta2 < 1, "must lie in (0, 1)"),
            ("epsilon", self.epsilon > 0, "must be positive"),
            ("dropout", 0 <= self.dropout < 1, "must lie in [0, 1)"),
            ("weight_decay", self.weight_decay >= 0, "must be non-negative"),
            ("max_patches", self.max_patches >= 1, "must be >= 1"),
            ("message_passings", self.message_passings >= 1, "must be >= 1"),
            ("graph_poolings", self.graph_poolings >= 1, "must be >= 1"),
            ("pooling_factor", 0 < self.pooling_factor <= 1, "must lie in (0, 1]"),
            ("embedding_size", self.embedding_size >= 1, "must be >= 1"),
            ("seed", self.seed >= 0, "must be non-negative"),
            ("max_epochs", self.max_epochs >= 1, "must be >= 1"),
            ("attention_heads", self.attention_heads == 1, "only single-head attention is supported"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name} {msg}, got {getattr(self, name)!r}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        try:
            mode = FeatureSpaceMode(self.feature_space_mode)
        except ValueError:
            raise ConfigError(f"unknown feature_space_mode {self.feature_space_mode!r}") from None
        self.feature_space_mode = mode.value
        mags = sorted(float(m) for m in self.magnifications)
        if len(mags) not in (1, 2):
            raise ConfigError("magnifications must list one or two values")
        if len(mags) == 2 and mags[1] != 2 * mags[0]:
            raise ConfigError("two magnifications must differ by a factor of 2")
        if mode.concatenated and len(mags) != 2:
            raise ConfigError(f"{mode.value} needs two magnifications")
        if any(not math.isfinite(m) or m <= 0 for m in mags):
            raise ConfigError("magnifications must be positive")
        self.magnifications = mags

    def out_of_published_range(self) -> list[str]:
        """Tuned fields outside the span of the published tuned values."""
        return [
            name for name in TUNED_FIELDS
            if not PUBLISHED_RANGES[name][0] <= getattr(self, name) <= PUBLISHED_RANGES[name][1]
        ]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ModelConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


# Tuned values per published model (ABMIL has no graph architecture).
_TABLE = {
    "learning_rate": [1e-4, 1e-5, 5e-5, 1e-4, 2e-4, 1e-4, 2e-3],
    "lr_decay": [0.9, 0.75, 0.9, 0.9, 0.45, 0.9, 0.6],
    "lr_patience": [10, 10, 10, 20, 15, 15, 20],
    "beta1": [0.9, 0.9, 0.95, 0.95, 0.9, 0.95, 0.8],
    "beta2": [0.9999, 0.999, 0.999, 0.999, 0.99999, 0.99, 0.95],
    "epsilon": [1e-5, 1e-5, 1e-7, 1e-7, 1e-7, 1e-7, 1e-2],
    "dropout": [0.2, 0.0, 0.0, 0.1, 0.2, 0.4, 0.2],
    "weight_decay": [1e-2, 1e-3, 1e-1, 1e-2, 1e-3, 1e-2, 1e-3],
    "max_patches": [6000, 1000, 4000, 14000, 4000, 5000, 5000],
    "message_passings": [3, None, 1, 1, 1, 1, 1],
    "graph_poolings": [4, None, 1, 2, 2, 2, 4],
    "pooling_factor": [0.9, None, 0.6, 0.6, 0.45, 0.75, 0.6],
    "embedding_size": [512, 512, 256, 256, 256, 256, 1024],
}
_COLUMNS = ["baseline", "abmil_10x", "graph_10x", "graph_10x20x", "naive", "concat_zero", "resnet50"]
_LAYOUT = {
    "baseline": ([5.0, 10.0], "concat_avg"),
    "graph_10x": ([10.0], "naive"),
    "graph_10x20x": ([10.0, 20.0], "concat_avg"),
    "naive": ([5.0, 10.0], "naive"),
    "concat_zero": ([5.0, 10.0], "concat_zero"),
    "resnet50": ([5.0, 10.0], "concat_avg"),
}

PUBLISHED_RANGES = {
    name: (min(v for v in vals if v is not None), max(v for v in vals if v is not None))
    for name, vals in _TABLE.items()
}


def preset(name: str, **overrides) -> ModelConfig:
    """Published tuned configuration of a graph model (see ``PRESET_NAMES``)."""
    if name not in _LAYOUT:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    col = _COLUMNS.index(name)
    mags, mode = _LAYOUT[name]
    values = {k: v[col] for k, v in _TABLE.items()}
    values.update(magnifications=list(mags), feature_space_mode=mode)
    values.update(overrides)
    return ModelConfig(**values)


PRESET_NAMES = tuple(_LAYOUT)
