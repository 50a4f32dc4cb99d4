"""Configuration dataclasses and the TOML run-config loader.

Every section of a run config maps onto one dataclass below. Unknown keys
are rejected so that typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration keys."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class DomainShift:
    """Parameters of the transform that turns a clean mix into a 'real' recording.

    background_tilt is the exponent of the background noise power spectrum
    (0 = white, -1 = pink, -2 = brown).
    """

    background_tilt: float = -1.5
    gain_db: float = -6.0
    lowpass_cutoff_hz: float = 2500.0


@dataclass(frozen=True)
class CorpusConfig:
    num_classes: int = 5
    clips_per_domain: int = 400
    real_test_clips: int = 100
    synthetic_test_clips: int = 100
    duration_s: float = 5.0
    sample_rate: int = 16000
    events_per_clip: tuple[int, int] = (1, 3)
    event_duration_s: tuple[float, float] = (0.5, 2.0)
    snr_db_synthetic: tuple[float, float] = (-6.0, 6.0)
    snr_db_real: tuple[float, float] = (-6.0, 6.0)
    # background spectrum of the synthetic domain; the real domain uses DomainShift
    synthetic_background_tilt: float = 0.0
    domain_shift: DomainShift = field(default_factory=DomainShift)
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError("corpus.num_classes", f"must be >= 2, got {self.num_classes}")
        if self.clips_per_domain < 1:
            raise ConfigError("corpus.clips_per_domain", "must be >= 1")
        if self.real_test_clips < 0 or self.synthetic_test_clips < 0:
            raise ConfigError("corpus.real_test_clips", "test clip counts must be >= 0")
        if self.duration_s <= 0:
            raise ConfigError("corpus.duration_s", "must be > 0")
        if self.sample_rate <= 0:
            raise ConfigError("corpus.sample_rate", "must be > 0")
        for name in ("events_per_clip", "event_duration_s", "snr_db_synthetic", "snr_db_real"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"corpus.{name}", f"empty range [{lo}, {hi}]")
        if self.events_per_clip[0] < 0:
            raise ConfigError("corpus.events_per_clip", "must be >= 0")
        if not 0 < self.event_duration_s[0] <= self.duration_s:
            raise ConfigError("corpus.event_duration_s", "events must fit the clip")
        if self.events_per_clip[1] > self.num_classes:
            # same-class events never overlap, distinct classes keep placement simple
            raise ConfigError("corpus.events_per_clip", "upper bound exceeds num_classes")


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 16000
    window_s: float = 0.025
    hop_s: float = 0.05
    n_mels: int = 64
    floor: float = 1e-10

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.hop_s

    def validate(self) -> None:
        if self.window_s <= 0 or self.hop_s <= 0:
            raise ConfigError("features.hop_s", "window and hop must be > 0")
        if self.n_mels < 1:
            raise ConfigError("features.n_mels", "must be >= 1")
        if self.floor <= 0:
            raise ConfigError("features.floor", "must be > 0")


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple[int, ...] = (16, 32, 64)
    freq_pool: tuple[int, ...] = (4, 4, 4)
    domain_dim: int = 64

    def validate(self) -> None:
        if len(self.channels) != len(self.freq_pool):
            raise ConfigError("model.freq_pool", "needs one entry per conv block")
        if any(c < 1 for c in self.channels) or self.domain_dim < 1:
            raise ConfigError("model.channels", "widths must be >= 1")


@dataclass(frozen=True)
class IfdConfig:
    margin: float = 0.1
    pseudo_threshold: float = 0.5
    include_silence_positives: bool = False
    max_hinge_terms: int = 10000
    reduction: str = "mean"
    warmup_epochs: int = 5

    def validate(self) -> None:
        if self.margin < 0:
            raise ConfigError("ifd.margin", "must be >= 0")
        if not 0.0 < self.pseudo_threshold < 1.0:
            raise ConfigError("ifd.pseudo_threshold", "must lie in (0, 1)")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError("ifd.reduction", "must be 'mean' or 'sum'")
        if self.max_hinge_terms < 1:
            raise ConfigError("ifd.max_hinge_terms", "must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 20
    learning_rate: float = 1e-3
    lambda_weak_real: float = 1.0
    lambda_weak_syn: float = 1.0
    lambda_ifd: float = 1.0
    lambda_sedb: float = 0.5
    enable_ifd: bool = False
    enable_sedb: bool = False
    seed: int = 0
    eval_every: int = 0

    def validate(self) -> None:
        for name in ("lambda_weak_real", "lambda_weak_syn", "lambda_ifd", "lambda_sedb"):
            if getattr(self, name) < 0:
                raise ConfigError(f"train.{name}", "weights must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", "must be >= 1")
        if self.enable_ifd and self.batch_size < 2:
            raise ConfigError("train.batch_size", "IFD pairing needs >= 2 clips per domain")
        if self.epochs < 0:
            raise ConfigError("train.epochs", "must be >= 0")


@dataclass(frozen=True)
class EvalConfig:
    decision_threshold: float = 0.5
    median_window: int = 7
    onset_collar_s: float = 0.2
    offset_collar_fraction: float = 0.2

    def validate(self) -> None:
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ConfigError("eval.median_window", "must be odd and >= 1")
        if self.onset_collar_s <= 0 or self.offset_collar_fraction <= 0:
            raise ConfigError("eval.onset_collar_s", "collars must be > 0")


@dataclass(frozen=True)
class RunConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    ifd: IfdConfig = field(default_factory=IfdConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()
        if self.features.sample_rate != self.corpus.sample_rate:
            raise ConfigError("features.sample_rate", "must equal corpus.sample_rate")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **sections: Any) -> "RunConfig":
        return dataclasses.replace(self, **sections)

    def model_hash(self) -> str:
        """Hash of everything a checkpoint's weights depend on structurally."""
        payload = {
            "num_classes": self.corpus.num_classes,
            "features": dataclasses.asdict(self.features),
            "model": dataclasses.asdict(self.model),
        }
        return config_hash(payload)


def config_hash(payload: Any) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _build(cls: type, data: dict[str, Any], prefix: str) -> Any:
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}.{key}", "expected a table")
            value = _build(type(default), value, f"{prefix}.{key}")
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{prefix}.{key}", "expected a list")
            value = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{prefix}.{key}", "expected true/false")
        elif isinstance(default, int) and not isinstance(value, int):
            raise ConfigError(f"{prefix}.{key}", f"expected an integer, got {value!r}")
        elif isinstance(default, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{prefix}.{key}", f"expected a number, got {value!r}")
            value = float(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    sections = {}
    known = {f.name: f for f in dataclasses.fields(RunConfig)}
    for name, body in data.items():
        if name not in known:
            raise ConfigError(name, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(name, "expected a table")
        sections[name] = _build(type(getattr(RunConfig(), name)), body, name)
    cfg = RunConfig(**sections)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Load a TOML run config; ``None`` gives the all-defaults config."""
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_dict(data)
