"""Held-out-template benchmark on simulated campaigns.

One benchmark run simulates every template of a split once, fits tool profiles
on the training streams only, builds strided snapshot series, trains on the
1:1-balanced training snapshots and evaluates on the held-out templates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .config import TrainConfig
from .evaluation import EvalReport, early_stage_eval
from .graph import CampaignGraphSeries, build_series
from .ingest import DEFAULT_HORIZON_SECONDS, fit_tool_profiles, normalize_stream
from .nn.model import ModelConfig
from .simulate import CampaignTemplate, SimulatedCampaign, run_template
from .templates import builtin_templates
from .training import balance_one_to_one, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    name: str
    train_templates: tuple[str, ...]
    test_templates: tuple[str, ...]

    def __post_init__(self) -> None:
        overlap = set(self.train_templates) & set(self.test_templates)
        if overlap:
            raise ValueError(f"train and test templates overlap: {sorted(overlap)}")


# 4 + 4 training templates of mixed size, 2 + 2 held out
MIXED_SPLIT = SplitSpec(
    "mixed",
    ("rw_small", "rw_wormlike", "rw_double_extortion", "rw_enterprise",
     "botnet_relay", "infostealer", "apt_lowslow", "apt_espionage"),
    ("rw_rapid", "rw_human_operated", "cryptominer", "banking_trojan"),
)

# train on small campaigns only, test on large ones
SIZE_SPLIT = SplitSpec(
    "small-to-large",
    ("rw_small", "rw_rapid", "rw_wormlike", "botnet_relay", "cryptominer", "infostealer"),
    ("rw_human_operated", "rw_enterprise", "banking_trojan", "apt_espionage"),
)

SPLITS = {"mixed": MIXED_SPLIT, "small-to-large": SIZE_SPLIT}


@dataclass(frozen=True)
class BenchmarkConfig:
    train: TrainConfig = field(default_factory=lambda: TrainConfig(step1_epochs=6, step2_epochs=10,
                                                                   step2_encoder_training=False))
    model: ModelConfig = field(default_factory=ModelConfig)
    fp_rate: float = 0.1
    train_snapshots_per_campaign: int = 50
    test_snapshots_per_campaign: int = 100
    horizon_seconds: float = DEFAULT_HORIZON_SECONDS

    def to_dict(self) -> dict[str, Any]:
        return {
            "train": self.train.to_dict(),
            "model": self.model.to_dict(),
            "fp_rate": self.fp_rate,
            "train_snapshots_per_campaign": self.train_snapshots_per_campaign,
            "test_snapshots_per_campaign": self.test_snapshots_per_campaign,
            "horizon_seconds": self.horizon_seconds,
        }


@dataclass
class BenchmarkResult:
    split: str
    seed: int
    embedding_training: bool
    report: EvalReport
    train_graphs: int
    seconds: float

    def auc(self, fraction: float = 1.0) -> float:
        value = self.report.block(fraction).auc
        return float("nan") if value is None else value

    def to_dict(self) -> dict[str, Any]:
        return {
            "split": self.split,
            "seed": self.seed,
            "embedding_training": self.embedding_training,
            "train_graphs": self.train_graphs,
            "seconds": self.seconds,
            "report": self.report.to_dict(),
        }


def instance_seed(seed: int, template_index: int) -> int:
    return 1000 * seed + template_index


def stride_for(n: int, target: int) -> int:
    return max(1, n // target)


def simulate_split(split: SplitSpec, seed: int, fp_rate: float,
                   templates: dict[str, CampaignTemplate] | None = None) -> tuple[list[SimulatedCampaign], list[SimulatedCampaign]]:
    templates = builtin_templates() if templates is None else templates
    order = sorted(templates)
    run = lambda tid: run_template(templates[tid], instance_seed(seed, order.index(tid)), fp_rate=fp_rate)  # noqa: E731
    return [run(t) for t in split.train_templates], [run(t) for t in split.test_templates]


def series_for(campaigns: Sequence[SimulatedCampaign], profiles, horizon: float, target: int) -> list[CampaignGraphSeries]:
    out = []
    for c in campaigns:
        alerts = normalize_stream(c.alerts, profiles, horizon)
        out.append(build_series(alerts, c.is_ransomware, c.template_id, c.campaign_id,
                                stride=stride_for(len(alerts), target)))
    return out


def prepare(split: SplitSpec, seed: int, config: BenchmarkConfig,
            templates: dict[str, CampaignTemplate] | None = None) -> tuple[list[CampaignGraphSeries], list[CampaignGraphSeries]]:
    """(training series, test series) with profiles fit on training streams only."""
    train_c, test_c = simulate_split(split, seed, config.fp_rate, templates)
    profiles = fit_tool_profiles(a for c in train_c for a in c.alerts)
    return (series_for(train_c, profiles, config.horizon_seconds, config.train_snapshots_per_campaign),
            series_for(test_c, profiles, config.horizon_seconds, config.test_snapshots_per_campaign))


def run_benchmark(split: SplitSpec, seed: int, config: BenchmarkConfig | None = None,
                  embedding_training: bool = True, prepared=None) -> BenchmarkResult:
    config = config or BenchmarkConfig()
    t0 = time.perf_counter()
    train_series, test_series = prepared if prepared is not None else prepare(split, seed, config)
    graphs = balance_one_to_one([s for ser in train_series for s in ser.snapshots], seed)
    tc = replace(config.train, seed=seed, embedding_training=embedding_training)
    state = train(graphs, tc, config.model)
    report = early_stage_eval(state.model, test_series, meta={"split": split.name, "seed": seed,
                                                              "benchmark": config.to_dict(),
                                                              "embedding_training": embedding_training})
    seconds = time.perf_counter() - t0
    logger.info("benchmark %s seed %d (%s): auc %.3f in %.0fs", split.name, seed,
                "full" if embedding_training else "frozen", report.block(1.0).auc or float("nan"), seconds)
    return BenchmarkResult(split.name, seed, embedding_training, report, len(graphs), seconds)


def summarize(results: Sequence[BenchmarkResult], fraction: float = 1.0) -> dict[str, float]:
    aucs = np.array([r.auc(fraction) for r in results])
    return {"mean": float(aucs.mean()), "min": float(aucs.min()), "max": float(aucs.max())}
