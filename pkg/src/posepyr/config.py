"""YAML run configuration (model / training / inference / data sections)."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

from .decode import DecodeConfig
from .model import ModelConfig
from .synthdata import SceneConfig


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 4
    base_lr: float = 1e-3
    lr_drops: tuple = (200 / 300, 260 / 300)   # fractions of total epochs
    lr_decay: float = 0.1
    seed: int = 0
    heatmap_weight: float = 1.0
    tag_weight: float = 1e-3
    sigma: float = 2.0
    augment: bool = True
    checkpoint_every: int = 0                  # epochs; 0 = final only
    log_every: int = 1                         # epochs per CSV row

    def validate(self):
        drops = tuple(self.lr_drops)
        if any(d <= 0 or d >= 1 for d in drops) or list(drops) != sorted(set(drops)):
            raise ValueError("lr_drops must be strictly increasing fractions in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def lr_at(self, epoch):
        lr = self.base_lr
        for frac in self.lr_drops:
            if epoch >= frac * self.epochs:
                lr *= self.lr_decay
        return lr


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    inference: DecodeConfig = field(default_factory=DecodeConfig)
    data: SceneConfig = field(default_factory=SceneConfig)
    dataset_dir: str = "data"
    out_dir: str = "out"
    checkpoint: str = ""

    def validate(self):
        self.model.validate()
        self.training.validate()
        self.data.validate()


def _merge(dc, overrides):
    for k, v in (overrides or {}).items():
        if not hasattr(dc, k):
            raise ValueError(f"unknown config key {k!r} for {type(dc).__name__}")
        cur = getattr(dc, k)
        if isinstance(cur, tuple) and isinstance(v, list):
            v = tuple(v)
        setattr(dc, k, v)
    return dc


def load_run_config(path) -> RunConfig:
    with open(path) as f:
        doc = yaml.safe_load(f) or {}
    cfg = RunConfig()
    _merge(cfg.model, doc.get("model"))
    _merge(cfg.training, doc.get("training"))
    _merge(cfg.inference, doc.get("inference"))
    _merge(cfg.data, doc.get("data"))
    for key in ("dataset_dir", "out_dir", "checkpoint"):
        if key in doc:
            setattr(cfg, key, doc[key])
    cfg.validate()
    return cfg


def dump_run_config(cfg: RunConfig, path):
    doc = {
        "model": asdict(cfg.model),
        "training": asdict(cfg.training),
        "inference": asdict(cfg.inference),
        "data": asdict(cfg.data),
        "dataset_dir": cfg.dataset_dir,
        "out_dir": cfg.out_dir,
        "checkpoint": cfg.checkpoint,
    }

    def clean(x):
        if isinstance(x, tuple):
            return [clean(v) for v in x]
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        return x

    with open(path, "w") as f:
        yaml.safe_dump(clean(doc), f, sort_keys=False)
