from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from ransomgraph.cli import EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_USAGE, main
from ransomgraph.graph import load_series
from ransomgraph.metrics import roc_auc
from ransomgraph.nn.checkpoint import load_model

from conftest import SMALL_MODEL

TEMPLATES = ["rw_small", "rw_rapid", "botnet_relay", "cryptominer"]


def tiny_config(path: Path, **train) -> Path:
    model = SMALL_MODEL.to_dict()
    doc = {"model": {k: model[k] for k in ("hidden_dim", "transformer_heads", "transformer_ff_dim",
                                           "conv_channels", "embedding_dim", "classifier_widths")},
           "train": {"step1_epochs": 1, "step2_epochs": 1, "batch_size": 8, **train}}
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = tiny_config(root / "cfg.yaml")
    assert main(["simulate", "--template", ",".join(TEMPLATES), "--seed", "3", "--out", str(root / "streams")]) == 0
    assert main(["build-graphs", str(root / "streams"), "--fit-profiles", "--stride", "10",
                 "--out", str(root / "series")]) == 0
    split = root / "split.yaml"
    split.write_text(yaml.safe_dump({"train": ["rw_small", "botnet_relay"], "test": ["rw_rapid", "cryptominer"]}))
    assert main(["train", str(root / "series"), "--config", str(cfg), "--split", str(split),
                 "--out", str(root / "model")]) == 0
    return root


class TestSimulate:
    def test_seeds_and_manifest(self, tmp_path):
        assert main(["simulate", "--template", "rw_small", "--count", "3", "--seed", "7", "--out", str(tmp_path)]) == 0
        files = sorted(p.name for p in tmp_path.glob("*.jsonl"))
        assert files == ["rw_small-s7.jsonl", "rw_small-s8.jsonl", "rw_small-s9.jsonl"]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert [c["seed"] for c in manifest["campaigns"]] == [7, 8, 9]
        assert all(c["label"] == "ransomware" for c in manifest["campaigns"])

    def test_labels_follow_templates(self, tmp_path, templates):
        assert main(["simulate", "--template", "all", "--out", str(tmp_path)]) == 0
        for c in json.loads((tmp_path / "manifest.json").read_text())["campaigns"]:
            assert (c["label"] == "ransomware") == templates[c["template_id"]].is_ransomware

    def test_byte_reproducible(self, tmp_path):
        for d in ("a", "b"):
            assert main(["simulate", "--template", "cryptominer", "--seed", "2", "--out", str(tmp_path / d)]) == 0
        for name in ("cryptominer-s2.jsonl", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_single_file_mode(self, tmp_path):
        out = tmp_path / "one.jsonl"
        assert main(["simulate", "--template", "rw_small", "--out", str(out)]) == 0
        assert out.exists() and Path(str(out) + ".manifest.json").exists()

    def test_unknown_template(self, tmp_path, capsys):
        assert main(["simulate", "--template", "nope", "--out", str(tmp_path)]) == EXIT_USAGE
        assert "unknown template" in capsys.readouterr().err


class TestBuildGraphs:
    def stream(self, tmp_path, n=100):
        lines = [json.dumps({"tool": "edr", "ts": 1000 + i, "risk": i % 7, "severity": i % 3,
                             "category": ["exec", "persist"][i % 2], "src": f"h{i % 3}"}) for i in range(n)]
        path = tmp_path / "s.jsonl"
        path.write_text("\n".join(lines) + "\n")
        return path

    @pytest.mark.parametrize("stride,expected", [(1, 100), (5, 20)])
    def test_snapshot_counts(self, tmp_path, capsys, stride, expected):
        s = self.stream(tmp_path)
        assert main(["build-graphs", str(s), "--fit-profiles", "--label", "other", "--stride", str(stride),
                     "--out", str(tmp_path / "o")]) == 0
        assert f"100 alerts -> {expected} snapshots" in capsys.readouterr().out
        assert len(load_series(tmp_path / "o" / "s.series.jsonl")) == expected

    def test_byte_reproducible(self, tmp_path):
        s = self.stream(tmp_path)
        for d in ("a", "b"):
            assert main(["build-graphs", str(s), "--fit-profiles", "--label", "other", "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "s.series.jsonl").read_bytes() == (tmp_path / "b" / "s.series.jsonl").read_bytes()

    def test_unknown_category(self, tmp_path):
        s = self.stream(tmp_path)
        assert main(["build-graphs", str(s), "--fit-profiles", "--label", "other", "--out", str(tmp_path / "a")]) == 0
        other = tmp_path / "t.jsonl"
        other.write_text(json.dumps({"tool": "edr", "ts": 1, "risk": 1, "severity": 1, "category": "brand-new",
                                     "src": "h"}) + "\n")
        code = main(["build-graphs", str(other), "--profiles", str(tmp_path / "a" / "profiles.json"),
                     "--label", "other", "--out", str(tmp_path / "b")])
        assert code == EXIT_DATA

    def test_missing_label(self, tmp_path):
        assert main(["build-graphs", str(self.stream(tmp_path)), "--fit-profiles",
                     "--out", str(tmp_path / "o")]) == EXIT_USAGE


class TestTrain:
    def test_outputs(self, pipeline):
        log = json.loads((pipeline / "model" / "train_log.json").read_text())
        for key in ("step1", "step2a_arcface", "step2a_graphcl", "step2b"):
            assert len(log["log"][key]) == 1
        assert log["meta"]["config"]["train"]["step1_epochs"] == 1
        model, header = load_model(pipeline / "model" / "checkpoint.bin")
        assert model.config.hidden_dim == 8 and header["meta"]["train_campaigns"] == ["botnet_relay-s3", "rw_small-s3"]

    def test_byte_reproducible(self, pipeline, tmp_path):
        split = pipeline / "split.yaml"
        assert main(["train", str(pipeline / "series"), "--config", str(pipeline / "cfg.yaml"),
                     "--split", str(split), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "checkpoint.bin").read_bytes() == (pipeline / "model" / "checkpoint.bin").read_bytes()

    def test_missing_campaigns(self, pipeline, tmp_path):
        split = tmp_path / "split.yaml"
        split.write_text(yaml.safe_dump({"train": ["rw_small", "ghost"], "test": ["rw_rapid"]}))
        assert main(["train", str(pipeline / "series"), "--config", str(pipeline / "cfg.yaml"),
                     "--split", str(split), "--out", str(tmp_path)]) == EXIT_USAGE


@pytest.fixture(scope="module")
def evaluated(pipeline):
    out = pipeline / "eval"
    assert main(["evaluate", str(pipeline / "series"), "--checkpoint", str(pipeline / "model" / "checkpoint.bin"),
                 "--split", str(pipeline / "split.yaml"), "--out", str(out)]) == 0
    return out


class TestEvaluate:
    def test_report_blocks_and_table(self, evaluated):
        doc = json.loads((evaluated / "report.json").read_text())
        assert [b["fraction"] for b in doc["metrics"]] == [0.2, 0.4, 0.6, 1.0]
        header = (evaluated / "report.txt").read_text().splitlines()[0]
        assert [c.strip() for c in header.split("|")] == ["Snapshots", "Precision", "Recall", "AUC Score"]

    def test_recompute_from_scores(self, evaluated):
        rows = [json.loads(line) for line in (evaluated / "scores.jsonl").read_text().splitlines()]
        doc = json.loads((evaluated / "report.json").read_text())
        scores = np.array([r["probability"] for r in rows])
        labels = np.array([r["label_is_ransomware"] for r in rows])
        full = doc["metrics"][-1]
        assert full["auc"] == roc_auc(scores, labels)
        assert full["tp"] == int(((scores >= 0.5) & labels).sum())

    def test_config_mismatch(self, pipeline, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"model": {"hidden_dim": 16, "classifier_widths": [48, 16, 8, 1]}}))
        code = main(["evaluate", str(pipeline / "series"), "--config", str(bad),
                     "--checkpoint", str(pipeline / "model" / "checkpoint.bin"), "--out", str(tmp_path)])
        assert code == EXIT_MODEL

    def test_report_command(self, evaluated, capsys):
        assert main(["report", str(evaluated / "report.json")]) == 0
        assert "AUC Score" in capsys.readouterr().out


class TestClassify:
    def test_stream_matches_batch(self, pipeline, tmp_path):
        stream = pipeline / "streams" / "rw_rapid-s3.jsonl"
        out = tmp_path / "scores.jsonl"
        code = main(["classify", str(stream), "--checkpoint", str(pipeline / "model" / "checkpoint.bin"),
                     "--profiles", str(pipeline / "series" / "profiles.json"), "--out", str(out)])
        assert code == EXIT_OK
        records = [json.loads(line) for line in out.read_text().splitlines()]
        n_alerts = sum(1 for line in stream.read_text().splitlines() if '"_meta"' not in line)
        assert len(records) == n_alerts
        assert [r["arrival_index"] for r in records] == list(range(n_alerts))
        assert all(r["verdict"] == (r["probability"] >= 0.5) for r in records)
        # batch path: full series of the same stream, scored in one evaluate run
        assert main(["build-graphs", str(stream), "--profiles", str(pipeline / "series" / "profiles.json"),
                     "--out", str(tmp_path / "series")]) == 0
        assert main(["evaluate", str(tmp_path / "series"), "--checkpoint",
                     str(pipeline / "model" / "checkpoint.bin"), "--out", str(tmp_path / "eval")]) == 0
        batch = [json.loads(line)["probability"] for line in (tmp_path / "eval" / "scores.jsonl").read_text().splitlines()]
        assert [r["probability"] for r in records] == batch

    def test_malformed_lines_skipped(self, pipeline, tmp_path):
        stream = tmp_path / "s.jsonl"
        good = (pipeline / "streams" / "rw_small-s3.jsonl").read_text().splitlines()[1:4]
        stream.write_text("\n".join([good[0], "{not json", good[1], '{"tool": "edr"}', good[2]]) + "\n")
        out = tmp_path / "o.jsonl"
        code = main(["classify", str(stream), "--checkpoint", str(pipeline / "model" / "checkpoint.bin"),
                     "--profiles", str(pipeline / "series" / "profiles.json"), "--out", str(out)])
        assert code == EXIT_DATA and len(out.read_text().splitlines()) == 3

    def test_bad_checkpoint(self, pipeline, tmp_path):
        junk = tmp_path / "junk.bin"
        junk.write_bytes(b"nope")
        code = main(["classify", str(pipeline / "streams" / "rw_small-s3.jsonl"), "--checkpoint", str(junk),
                     "--profiles", str(pipeline / "series" / "profiles.json"), "--out", str(tmp_path / "o")])
        assert code == EXIT_MODEL


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == EXIT_USAGE
    assert main(["ingest", str(tmp_path / "missing.jsonl")]) == EXIT_USAGE
