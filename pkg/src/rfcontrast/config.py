"""Experiment configuration: one JSON document, one section per subsystem.

`ExperimentConfig()` carries the full-scale dataset geometry (15 devices,
2500 frames per capture, window 1000); `ExperimentConfig.desk_scale()` is the
reduced grid used by CI and the acceptance experiment (8 devices, 200 frames,
2 sets, 2 days, shallow encoder, 20 pre-train epochs).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

from .augment import AugmentConfig
from .encoder import EncoderConfig
from .synth import DeviceRanges, DomainRanges


@dataclass(frozen=True)
class DevicesConfig:
    num_devices: int = 15
    seed: int = 101
    ranges: DeviceRanges = field(default_factory=DeviceRanges)


@dataclass(frozen=True)
class DomainsConfig:
    num_days: int = 2
    seed: int = 202
    ranges: DomainRanges = field(default_factory=DomainRanges)


@dataclass(frozen=True)
class DatasetConfig:
    window: int = 1000
    frames_per_capture: int = 2500
    sets_per_day: int = 2
    sample_rate_hz: float = 1_000_000.0
    seed: int = 303

    @property
    def samples_per_day(self) -> int:
        return self.sets_per_day * self.frames_per_capture * self.window


@dataclass(frozen=True)
class PretrainConfig:
    batch_size: int = 256
    epochs: int = 50
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    momentum_coeff: float = 0.99
    tau: float = 0.2
    seed: int = 0
    domains_used: str = "source_and_target"  # "source_only" is the ablation

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.domains_used not in ("source_and_target", "source_only"):
            raise ValueError(f"unknown domains_used: {self.domains_used!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    learning_rate: float = 1e-3
    batch_size: int = 256


@dataclass(frozen=True)
class GridConfig:
    # pairs of (source, target) identified as [day, set_index]
    pairs: tuple = (((0, 0), (1, 0)),)
    models: tuple = ("CNN", "AB", "CTL")
    seeds: tuple = (0, 1, 2)


@dataclass(frozen=True)
class ExperimentConfig:
    devices: DevicesConfig = field(default_factory=DevicesConfig)
    domains: DomainsConfig = field(default_factory=DomainsConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    @classmethod
    def desk_scale(cls) -> "ExperimentConfig":
        # batch 128 / momentum 0.9 / lr 2e-3: a 500-step schedule needs more
        # optimizer steps and fresher momentum keys than the long-run defaults
        return cls(
            devices=DevicesConfig(num_devices=8),
            domains=DomainsConfig(num_days=2),
            dataset=DatasetConfig(frames_per_capture=200, sets_per_day=2),
            encoder=EncoderConfig(stage_widths=(16, 32), stage_blocks=(1, 1),
                                  projector_hidden=256, predictor_hidden=256),
            pretrain=PretrainConfig(epochs=20, batch_size=128,
                                    learning_rate=2e-3, momentum_coeff=0.9),
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Rebase every section seed on one master seed (CLI --seed)."""
        return replace(
            self,
            devices=replace(self.devices, seed=seed + 1),
            domains=replace(self.domains, seed=seed + 2),
            dataset=replace(self.dataset, seed=seed + 3),
            grid=replace(self.grid, seeds=tuple(seed + 10 * i for i in range(len(self.grid.seeds)))),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _tupled(obj):
    if isinstance(obj, list):
        return tuple(_tupled(v) for v in obj)
    return obj


def _build_section(cls, data: dict, nested: dict = ()):
    kwargs = {}
    for key, value in data.items():
        if nested and key in nested:
            kwargs[key] = nested[key](**{k: _tupled(v) for k, v in value.items()})
        else:
            kwargs[key] = _tupled(value)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    sections = {
        "devices": lambda d: _build_section(DevicesConfig, d, {"ranges": DeviceRanges}),
        "domains": lambda d: _build_section(DomainsConfig, d, {"ranges": DomainRanges}),
        "dataset": lambda d: _build_section(DatasetConfig, d),
        "augment": lambda d: _build_section(AugmentConfig, d),
        "encoder": lambda d: _build_section(EncoderConfig, d),
        "pretrain": lambda d: _build_section(PretrainConfig, d),
        "train": lambda d: _build_section(TrainConfig, d),
        "grid": lambda d: _build_section(GridConfig, d),
    }
    unknown = set(data) - set(sections)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {name: build(data[name]) for name, build in sections.items() if name in data}
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a config JSON file; raises ValueError on structural problems."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    try:
        return config_from_dict(data)
    except TypeError as exc:
        raise ValueError(f"config file {path}: {exc}") from exc


def save_config(cfg: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.to_json())
    return path
