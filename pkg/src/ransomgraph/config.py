"""Training and run configuration.

Config files are YAML or JSON with optional sections ``model``, ``train``,
``ingest`` and ``simulate``; anything left out keeps its default. The merged,
effective configuration is written into every artifact a command produces.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import json
import yaml

from .ingest import DEFAULT_HORIZON_SECONDS
from .nn.model import ModelConfig
from . import optim


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    step1_epochs: int = 20
    step2_epochs: int = 30
    batch_size: int = 16
    temperature: float = 0.5
    # step 1 and both projection heads in step 2A
    contrastive_lr: float = optim.CONTRASTIVE_LR
    contrastive_weight_decay: float = optim.CONTRASTIVE_WD
    arcface_lr: float = optim.CONTRASTIVE_LR
    arcface_weight_decay: float = optim.CONTRASTIVE_WD
    # "small": many small campaigns, "large": large campaigns
    corpus_size_mode: str = "small"
    classifier_lr: float | None = None
    classifier_weight_decay: float | None = None
    arcface_scale: float = 30.0
    arcface_margin: float = 0.3
    arcface_subcenters: int = 3
    step1_remove_fraction: float = 0.25
    step1_add_fraction: float = 0.10
    step2_remove_fraction: float = 0.25
    step2_add_fraction: float = 0.10
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    decoupled_weight_decay: bool = True
    freeze_cross_stitch: bool = False
    # whether the ArcFace and GraphCL epochs of step 2 also update the encoder
    step2_encoder_training: bool = True
    # False trains only the classifier on the randomly initialized encoder
    embedding_training: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for contrastive steps")
        if self.step1_epochs < 0 or self.step2_epochs < 0:
            raise ValueError("epoch budgets must be non-negative")
        if self.corpus_size_mode not in ("small", "large"):
            raise ValueError("corpus_size_mode must be 'small' or 'large'")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def effective_classifier_lr(self) -> float:
        if self.classifier_lr is not None:
            return self.classifier_lr
        return optim.CLASSIFIER_SMALL_LR if self.corpus_size_mode == "small" else optim.CLASSIFIER_LARGE_LR

    @property
    def effective_classifier_weight_decay(self) -> float:
        if self.classifier_weight_decay is not None:
            return self.classifier_weight_decay
        return optim.CLASSIFIER_SMALL_WD if self.corpus_size_mode == "small" else optim.CLASSIFIER_LARGE_WD

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["effective_classifier_lr"] = self.effective_classifier_lr
        d["effective_classifier_weight_decay"] = self.effective_classifier_weight_decay
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TrainConfig:
        d = {k: v for k, v in d.items() if not k.startswith("effective_")}
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        _check_keys(cls, d)
        return cls(**d)


@dataclass(frozen=True)
class IngestConfig:
    horizon_seconds: float = DEFAULT_HORIZON_SECONDS


@dataclass(frozen=True)
class SimulateConfig:
    hosts: int | None = None
    fp_rate: float = 0.1
    templates_file: str | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "ingest": asdict(self.ingest),
            "simulate": asdict(self.simulate),
        }

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, train=replace(self.train, seed=seed))


def _check_keys(cls, d: Mapping[str, Any]) -> None:
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")


def run_config_from_dict(doc: Mapping[str, Any]) -> RunConfig:
    unknown = set(doc) - {"model", "train", "ingest", "simulate"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    ing = dict(doc.get("ingest", {}))
    sim = dict(doc.get("simulate", {}))
    _check_keys(IngestConfig, ing)
    _check_keys(SimulateConfig, sim)
    return RunConfig(
        model=ModelConfig.from_dict(doc.get("model", {})),
        train=TrainConfig.from_dict(doc.get("train", {})),
        ingest=IngestConfig(**ing),
        simulate=SimulateConfig(**sim),
    )


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return run_config_from_dict(doc or {})
