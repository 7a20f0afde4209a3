"""Resolved run configuration.

Precedence is defaults < JSON config file < command-line flags. The resolved
``Config.to_dict()`` is embedded in every artifact the CLI writes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .errors import IoError, UsageError


@dataclass
class RasterConfig:
    height: int = 224
    width: int = 224
    history_steps: int = 11
    scale: float = 0.5  # meters per pixel
    anchor: tuple[float, float] = (61.0, 112.0)  # (u, v) = (column, row)
    min_speed: float = 0.1

    @property
    def channels(self) -> int:
        return 3 + 2 * self.history_steps


@dataclass
class ModelConfig:
    k: int = 6
    future_steps: int = 80
    hidden: int = 256
    pool: int = 14  # pooled grid is pool x pool per channel
    output_scale: float = 10.0  # meters per unit of raw head output
    init_fan_angle: float = 75.0  # degrees; initial hypotheses are rays spread over +-this angle
    init_fan_speed: float = 10.0  # m/s along each initial ray


@dataclass
class TrainingConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 48
    iterations: int = 2000
    t0: int = 11350
    t_mult: int = 1
    eta_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.1
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.eta_min > self.lr:
            raise UsageError(f"eta_min {self.eta_min} > lr {self.lr}")
        if self.t0 < 1:
            raise UsageError(f"t0 must be >= 1, got {self.t0}")
        if self.t_mult < 1:
            raise UsageError(f"t_mult must be >= 1, got {self.t_mult}")


@dataclass
class MetricsConfig:
    miss_threshold: float = 2.0


@dataclass
class Config:
    raster: RasterConfig = field(default_factory=RasterConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        return _merge(cls(), d)


def _merge(obj, overrides: dict):
    if not isinstance(overrides, dict):
        raise UsageError(f"config section for {type(obj).__name__} must be an object")
    known = {f.name: f for f in fields(obj)}
    kwargs = {}
    for name, f in known.items():
        cur = getattr(obj, name)
        if name not in overrides:
            kwargs[name] = cur
        elif is_dataclass(cur):
            kwargs[name] = _merge(cur, overrides[name])
        elif isinstance(cur, tuple):
            kwargs[name] = tuple(overrides[name])
        else:
            kwargs[name] = type(cur)(overrides[name])
    unknown = set(overrides) - set(known)
    if unknown:
        raise UsageError(f"unknown config field(s) in {type(obj).__name__}: {sorted(unknown)}")
    return type(obj)(**kwargs)


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> Config:
    cfg = Config()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise IoError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config {path} is not valid JSON: {e}") from None
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg
