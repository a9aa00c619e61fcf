"""Scoring test campaigns and reporting precision / recall / AUC, overall and
on early prefixes of each campaign's snapshot series."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .graph import PREFIX_FRACTIONS, CampaignGraphSeries, prefix_length
from .metrics import precision_recall, roc_auc
from .nn.model import AlertGraphModel

REPORT_FORMAT = "eval-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class MetricsBlock:
    fraction: float
    num_snapshots: int
    precision: float
    recall: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    precision_undefined: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    blocks: list[MetricsBlock]
    campaigns: list[dict[str, Any]]
    threshold: float = 0.5
    meta: dict[str, Any] = field(default_factory=dict)

    def block(self, fraction: float) -> MetricsBlock:
        for b in self.blocks:
            if abs(b.fraction - fraction) < 1e-12:
                return b
        raise KeyError(fraction)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "threshold": self.threshold,
            "metrics": [b.to_dict() for b in self.blocks],
            "campaigns": self.campaigns,
            "meta": self.meta,
        }

    def table(self) -> str:
        return render_table(self.to_dict())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def render_table(report: Mapping[str, Any]) -> str:
    rows = [("Snapshots", "Precision", "Recall", "AUC Score")]
    for b in report["metrics"]:
        frac = b["fraction"]
        name = "all" if frac == 1.0 else f"first {round(frac * 100)}%"
        auc = "n/a" if b["auc"] is None else f"{b['auc']:.3f}"
        prec = f"{b['precision']:.3f}" + ("*" if b["precision_undefined"] else "")
        rows.append((f"{name} ({b['num_snapshots']})", prec, f"{b['recall']:.3f}", auc))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    if any(b["precision_undefined"] for b in report["metrics"]):
        lines.append("* no predicted positives; precision undefined and reported as 0")
    return "\n".join(lines)


def score_series(model: AlertGraphModel, series: Sequence[CampaignGraphSeries], batch_size: int = 64) -> list[np.ndarray]:
    """Ransomware probability of every retained snapshot, per campaign."""
    model.eval()
    return [model.predict_proba(list(s.snapshots), batch_size) for s in series]


def metrics_block(fraction: float, scores: np.ndarray, labels: np.ndarray, threshold: float) -> MetricsBlock:
    conf = precision_recall(scores, labels, threshold)
    both = labels.any() and (~labels).any()
    return MetricsBlock(fraction, len(scores), conf.precision, conf.recall,
                        roc_auc(scores, labels) if both else None,
                        conf.tp, conf.fp, conf.tn, conf.fn, conf.precision_undefined)


def report_from_scores(
    series: Sequence[CampaignGraphSeries],
    scores: Sequence[np.ndarray],
    fractions: Sequence[float] = PREFIX_FRACTIONS,
    threshold: float = 0.5,
    meta: Mapping[str, Any] | None = None,
) -> EvalReport:
    blocks = []
    for f in fractions:
        s_parts, y_parts = [], []
        for ser, sc in zip(series, scores):
            k = prefix_length(len(sc), f)
            s_parts.append(sc[:k])
            y_parts.append(np.full(k, ser.label_is_ransomware))
        s_all = np.concatenate(s_parts) if s_parts else np.zeros(0)
        y_all = np.concatenate(y_parts) if y_parts else np.zeros(0, dtype=bool)
        blocks.append(metrics_block(f, s_all, y_all, threshold))
    campaigns = []
    for ser, sc in zip(series, scores):
        campaigns.append({
            "campaign_id": ser.campaign_id,
            "campaign_class": ser.campaign_class,
            "label_is_ransomware": ser.label_is_ransomware,
            "num_snapshots": int(len(sc)),
            "mean_score": float(np.mean(sc)) if len(sc) else None,
            "positive_rate": float(np.mean(sc >= threshold)) if len(sc) else None,
        })
    return EvalReport(blocks, campaigns, threshold, dict(meta or {}))


def early_stage_eval(
    model: AlertGraphModel,
    series: Sequence[CampaignGraphSeries],
    fractions: Sequence[float] = PREFIX_FRACTIONS,
    threshold: float = 0.5,
    meta: Mapping[str, Any] | None = None,
) -> EvalReport:
    """Metrics on the first ceil(f * n) snapshots of every campaign, per fraction."""
    return report_from_scores(series, score_series(model, series), fractions, threshold, meta)
