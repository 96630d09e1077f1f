"""Experiment configuration: the ``TrainConfig`` record and its flat-file loader.

Config files hold one ``key = value`` per line; ``#`` starts a comment.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from reca import activations as act
from reca.nn.model import PRESETS

DATA_DIR_ENV = "RECA_DATA_DIR"
DATASETS = ("cifar10", "cifar100", "spirals", "synthetic-cifar")
REQUIRED = ("dataset", "model", "activation", "epochs")


class ConfigError(ValueError):
    pass


def _parse_seeds(text):
    return tuple(int(s) for s in str(text).replace(",", " ").split())


@dataclass(frozen=True)
class TrainConfig:
    dataset: str
    model: str
    activation: str
    epochs: int
    data_dir: str = ""
    split_seed: int = 0
    seeds: tuple = (1, 2, 3)
    granularity: str = "channel"
    batch: int = 128
    optimizer: str = "sgd"
    lr0: float = 0.05
    eta_min: float = 1e-4
    momentum: float = 0.9
    l2: float = 1e-7
    act_lr_scale: float = 1.0
    precision: str = "float32"
    train_fraction: float = 0.8
    train_limit: int = 0
    test_limit: int = 0
    reca_alpha: float = 0.5
    reca_beta: float = 0.05
    reca_delta: float = 0.05
    synthetic_n: int = 6000
    spiral_noise: float = 0.05

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch < 1:
            raise ConfigError(f"batch: must be >= 1, got {self.batch}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset: unknown {self.dataset!r}; choose from {list(DATASETS)}")
        if self.model not in PRESETS:
            raise ConfigError(f"model: unknown {self.model!r}; choose from {sorted(PRESETS)}")
        if self.activation not in act.KINDS:
            raise ConfigError(f"activation: unknown {self.activation!r}; choose from {sorted(act.KINDS)}")
        if self.granularity not in ("global", "channel", "neuron"):
            raise ConfigError(f"granularity: unknown {self.granularity!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer: unknown {self.optimizer!r}; choose 'sgd' or 'adam'")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision: must be float32 or float64, got {self.precision!r}")
        if not self.seeds:
            raise ConfigError("seeds: at least one run seed is required")
        if not self.lr0 > self.eta_min > 0:
            raise ConfigError(f"lr0/eta_min: need lr0 > eta_min > 0, got {self.lr0}, {self.eta_min}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction: must be in (0, 1), got {self.train_fraction}")
        for key in ("l2", "act_lr_scale", "train_limit", "test_limit"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: must be >= 0, got {getattr(self, key)}")
        if self.dataset == "spirals" and self.model != "mlp":
            raise ConfigError(f"model: {self.model!r} needs image input; use 'mlp' with spirals")
        try:
            act.RecaParams(self.reca_alpha, self.reca_beta, self.reca_delta)
        except act.DomainError as e:
            raise ConfigError(f"reca_alpha/reca_beta/reca_delta: {e}") from None

    def activation_kind(self):
        if self.activation == "reca":
            return act.ReCA(act.RecaParams(self.reca_alpha, self.reca_beta, self.reca_delta))
        return act.kind_from_name(self.activation)

    def resolved_data_dir(self) -> str:
        return self.data_dir or os.environ.get(DATA_DIR_ENV, "")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d


_FIELDS = {f.name: f for f in fields(TrainConfig)}
_DEFAULTS = {f.name: f.default for f in fields(TrainConfig) if f.default is not dataclasses.MISSING}


def _convert(key, raw, where):
    default = _DEFAULTS.get(key)
    typ = {"epochs": int}.get(key) or type(default)
    try:
        if key == "seeds":
            return _parse_seeds(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"{key}{where}: cannot parse {raw!r} as {'seed list' if key == 'seeds' else typ.__name__}") from None


def parse_pairs(lines, source="<overrides>") -> dict:
    """``key = value`` lines into a dict of converted values (later lines win)."""
    out = {}
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{key} ({source}:{lineno}): unknown key")
        out[key] = _convert(key, value, f" ({source}:{lineno})")
    return out


def load_config(path=None, overrides=()) -> TrainConfig:
    """Read a config file, apply ``key=value`` overrides, validate.

    ``path`` may be None to build a config from overrides alone.
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_pairs(path.read_text().splitlines(), str(path)))
    values.update(parse_pairs(list(overrides), "override"))
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return TrainConfig(**values)
