"""Flat JSON run configuration with strict key checking."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .diffusion import make_linear_schedule
from .haze import DEPTH_MODES
from .sampler import SamplerConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # toy data
    size: int = 32
    n_train: int = 200
    n_test: int = 20
    beta_haze: float = 1.5
    depth_mode: str = "radial"
    # schedule
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # stage 1
    stage1_steps: int = 500
    stage1_lr: float = 3e-3
    stage1_batch: int = 8
    # diffusion training
    diffusion_steps: int = 2000
    lr: float = 1e-3
    warmup_steps: int = 200
    ema_decay: float = 0.999
    lambda_fre: float = 0.01
    batch_size: int = 8
    # sampling
    fusion_steps: str | list = "auto"
    clamp_x0: bool = True
    use_ema: bool = True
    dense_threshold: float = 0.3

    def __post_init__(self):
        if self.depth_mode not in DEPTH_MODES:
            raise ConfigError(f"depth_mode must be one of {DEPTH_MODES}")
        if isinstance(self.fusion_steps, str) and self.fusion_steps != "auto":
            raise ConfigError("fusion_steps must be 'auto' or a list of steps")
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and (not isinstance(v, int) or isinstance(v, bool)):
                raise ConfigError(f"{f.name} must be an integer, got {v!r}")
            if f.type == "float" and (not isinstance(v, (int, float)) or isinstance(v, bool)):
                raise ConfigError(f"{f.name} must be a number, got {v!r}")
            if f.type == "bool" and not isinstance(v, bool):
                raise ConfigError(f"{f.name} must be true or false, got {v!r}")

    def schedule(self):
        return make_linear_schedule(self.T, self.beta_start, self.beta_end)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.warmup_steps, self.ema_decay, self.lambda_fre,
                           self.batch_size, self.seed)

    def sampler_config(self, seed: int | None = None) -> SamplerConfig:
        steps = self.fusion_steps if isinstance(self.fusion_steps, str) else frozenset(self.fusion_steps)
        return SamplerConfig(self.T, steps, self.seed if seed is None else seed,
                             self.clamp_x0, self.use_ema, self.dense_threshold)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if not isinstance(d["fusion_steps"], str):
            d["fusion_steps"] = sorted(int(s) for s in d["fusion_steps"])
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        d = dict(d)
        for k in ("lr", "stage1_lr", "beta_start", "beta_end", "ema_decay", "lambda_fre",
                  "beta_haze", "dense_threshold"):
            if k in d and isinstance(d[k], int) and not isinstance(d[k], bool):
                d[k] = float(d[k])
        return cls(**d)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))
