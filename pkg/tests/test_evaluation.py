from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from ransomgraph.evaluation import early_stage_eval, render_table, report_from_scores
from ransomgraph.graph import PREFIX_FRACTIONS
from ransomgraph.metrics import roc_auc
from ransomgraph.nn.model import AlertGraphModel

from conftest import SMALL_MODEL


@dataclass
class FakeSeries:
    campaign_id: str
    campaign_class: str
    label_is_ransomware: bool
    snapshots: tuple = ()


def fixture_scores():
    series = [FakeSeries("a", "x", True), FakeSeries("b", "y", False), FakeSeries("c", "z", True)]
    rng = np.random.default_rng(0)
    scores = [rng.random(7), rng.random(10), rng.random(3)]
    return series, scores


def test_prefix_counts_and_full_equals_whole():
    series, scores = fixture_scores()
    rep = report_from_scores(series, scores)
    assert [b.fraction for b in rep.blocks] == list(PREFIX_FRACTIONS)
    for b in rep.blocks:
        assert b.num_snapshots == sum(math.ceil(b.fraction * len(s) - 1e-12) for s in scores)
    whole = np.concatenate(scores)
    labels = np.concatenate([np.full(len(s), ser.label_is_ransomware) for ser, s in zip(series, scores)])
    assert rep.block(1.0).auc == roc_auc(whole, labels)
    assert rep.block(1.0).tp + rep.block(1.0).fn == 10


def test_single_class_prefix_has_no_auc():
    rep = report_from_scores([FakeSeries("a", "x", True)], [np.array([0.2, 0.9])])
    assert all(b.auc is None for b in rep.blocks)


def test_report_schema_and_table(tmp_path):
    series, scores = fixture_scores()
    rep = report_from_scores(series, scores, meta={"seed": 1})
    path = tmp_path / "r.json"
    rep.write(path)
    doc = json.loads(path.read_text())
    assert doc["format"] == "eval-report" and len(doc["metrics"]) == 4 and doc["meta"] == {"seed": 1}
    assert [c["campaign_id"] for c in doc["campaigns"]] == ["a", "b", "c"]
    for b in doc["metrics"]:
        assert all(0 <= b[k] <= 1 for k in ("precision", "recall")) and (b["auc"] is None or 0 <= b["auc"] <= 1)
    table = render_table(doc)
    assert table.splitlines()[0].split(" | ")[0].strip() == "Snapshots"
    assert "AUC Score" in table and "first 20%" in table and "all (20)" in table


def test_undefined_precision_marked():
    rep = report_from_scores([FakeSeries("a", "x", True), FakeSeries("b", "y", False)],
                             [np.array([0.1, 0.2]), np.array([0.3])])
    assert rep.block(1.0).precision_undefined and "*" in rep.table()


def test_early_stage_eval_uses_model(small_corpus):
    model = AlertGraphModel(SMALL_MODEL)
    rep = early_stage_eval(model, small_corpus, threshold=0.5)
    full = [model.predict_proba(list(s.snapshots)) for s in small_corpus]
    assert rep.to_dict() == report_from_scores(small_corpus, full).to_dict()
    assert rep.block(0.2).num_snapshots == sum(math.ceil(0.2 * len(s.snapshots)) for s in small_corpus)
