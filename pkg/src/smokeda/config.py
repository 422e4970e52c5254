"""Experiment configuration: YAML schema, defaults, flag precedence."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .synth import DatasetSpec
from .training import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    version: int = SCHEMA_VERSION
    name: str = "default"
    seed: int | None = None
    outputs: str = "runs/default"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: dict = field(default_factory=lambda: {
        "seeds": 3,
        "ratios_st": [1, 2, 3],
        "ratios_ns": [0.5, 1.0, 2.0],
        "betas": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "with_coral": True,
        "augment_factor": 2,
    })
    ablation: dict = field(default_factory=lambda: {"seeds": 5})
    tsne: dict = field(default_factory=lambda: {
        "perplexity": 30.0, "iters": 400, "n_per_group": 200, "seed": 0,
    })

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "name": self.name,
            "seed": self.seed,
            "outputs": self.outputs,
            "dataset": self.dataset.to_dict(),
            "train": self.train.to_dict(),
            "sweep": dict(self.sweep),
            "ablation": dict(self.ablation),
            "tsne": dict(self.tsne),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.get("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config version {version}, expected {SCHEMA_VERSION}")
        cfg = cls()
        cfg.version = version
        cfg.name = d.get("name", cfg.name)
        cfg.seed = d.get("seed", cfg.seed)
        cfg.outputs = d.get("outputs", cfg.outputs)
        if "dataset" in d:
            cfg.dataset = DatasetSpec.from_dict(d["dataset"])
        if "train" in d:
            cfg.train = TrainConfig.from_dict(d["train"])
        cfg.sweep.update(d.get("sweep", {}))
        cfg.ablation.update(d.get("ablation", {}))
        cfg.tsne.update(d.get("tsne", {}))
        return cfg


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return ExperimentConfig.from_dict(data)


def resolve(cfg: ExperimentConfig, seed: int | None = None,
            out: str | None = None) -> ExperimentConfig:
    """Apply precedence flag > config file > SMOKEDA_SEED env > default."""
    if seed is None and cfg.seed is None:
        env = os.environ.get("SMOKEDA_SEED")
        if env is not None:
            seed = int(env)
    if seed is not None:
        cfg.seed = seed
        cfg.train.seed = seed
    elif cfg.seed is not None:
        cfg.train.seed = cfg.seed
    if out is not None:
        cfg.outputs = out
    return cfg


def write_resolved(cfg: ExperimentConfig, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.resolved")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
    os.replace(tmp, path)
    return path
