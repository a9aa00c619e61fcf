"""Command-line interface.

Exit codes: 0 ok, 2 usage or configuration error, 3 data error, 4 model
mismatch. Every artifact written carries the effective configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .benchmark import SPLITS, BenchmarkConfig, prepare, run_benchmark, summarize
from .config import RunConfig, load_run_config
from .evaluation import render_table, report_from_scores, score_series
from .graph import CampaignGraphSeries, GraphBuilder, build_series, dump_series, load_series, snapshots_of
from .ingest import (
    AlertParseError,
    UnknownCategoryError,
    UnknownToolError,
    fit_tool_profiles,
    iter_stream_lines,
    load_profiles,
    normalize_alert,
    normalize_stream,
    parse_alert_line,
    read_alert_stream,
    save_profiles,
    write_alert_stream,
)
from .nn.checkpoint import CheckpointError, ConfigMismatchError, load_model
from .simulate import run_template
from .templates import builtin_templates, load_templates
from .training import balance_one_to_one, train

logger = logging.getLogger("ransomgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _usage(msg: str) -> CliError:
    return CliError(msg, EXIT_USAGE)


def _data(msg: str) -> CliError:
    return CliError(msg, EXIT_DATA)


# ---------------------------------------------------------------------------
# helpers

def _run_config(args: argparse.Namespace) -> RunConfig:
    try:
        cfg = load_run_config(args.config)
    except (OSError, ValueError, TypeError, yaml.YAMLError) as exc:
        raise _usage(f"cannot load config {args.config}: {exc}") from None
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _expand(paths: Sequence[str], pattern: str) -> list[Path]:
    out: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob(pattern)))
        elif p.exists():
            out.append(p)
        else:
            raise _usage(f"no such file or directory: {p}")
    if not out:
        raise _usage(f"no input files matching {pattern}")
    return out


def _templates(cfg: RunConfig) -> dict:
    if cfg.simulate.templates_file:
        try:
            return load_templates(cfg.simulate.templates_file)
        except (OSError, ValueError, KeyError, yaml.YAMLError) as exc:
            raise _usage(f"cannot load templates: {exc}") from None
    return builtin_templates()


def _read_stream(path: Path) -> tuple[dict, list]:
    try:
        return read_alert_stream(path)
    except AlertParseError as exc:
        raise _data(f"{path}: {exc}") from None


def _load_series_files(paths: Sequence[str]) -> list[CampaignGraphSeries]:
    out = []
    for p in _expand(paths, "*.series.jsonl"):
        try:
            out.append(load_series(p))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise _data(f"{p}: {exc}") from None
    return out


def _select(series: list[CampaignGraphSeries], ids: Sequence[str] | None, role: str) -> list[CampaignGraphSeries]:
    """Series whose campaign id or template (class) id is listed."""
    if ids is None:
        return series
    missing = [i for i in ids if not any(i in (s.campaign_id, s.campaign_class) for s in series)]
    if missing:
        raise _usage(f"split {role} set references missing campaigns: {', '.join(missing)}")
    return [s for s in series if s.campaign_id in ids or s.campaign_class in ids]


def _split(path: str | None) -> dict[str, list[str]] | None:
    if path is None:
        return None
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise _usage(f"cannot read split {path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("train"), list) or not isinstance(doc.get("test"), list):
        raise _usage(f"{path}: split needs 'train' and 'test' lists")
    overlap = set(doc["train"]) & set(doc["test"])
    if overlap:
        raise _usage(f"{path}: train and test overlap: {sorted(overlap)}")
    return {"train": [str(x) for x in doc["train"]], "test": [str(x) for x in doc["test"]]}


def _load_checkpoint(path: str, cfg: RunConfig | None):
    try:
        model, header = load_model(path)
    except ConfigMismatchError as exc:
        raise CliError(str(exc), EXIT_MODEL) from None
    except (OSError, CheckpointError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}", EXIT_MODEL) from None
    if cfg is not None:
        # class count and sub-centers are fixed at training time
        expected = replace(cfg.model, num_campaign_classes=model.config.num_campaign_classes,
                           arcface_subcenters=cfg.train.arcface_subcenters)
        if expected != model.config:
            mine, theirs = expected.to_dict(), model.config.to_dict()
            diff = sorted(k for k in mine if mine[k] != theirs[k])
            raise CliError(f"config does not match checkpoint model: {', '.join(diff)}", EXIT_MODEL)
    return model, header


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    templates = _templates(cfg)
    ids = [t for spec in args.template for t in spec.split(",") if t]
    if ids == ["all"]:
        ids = sorted(templates)
    unknown = [t for t in ids if t not in templates]
    if unknown:
        raise _usage(f"unknown template id(s): {', '.join(unknown)}; known: {', '.join(sorted(templates))}")
    if args.count < 1:
        raise _usage("--count must be >= 1")
    fp_rate = cfg.simulate.fp_rate if args.fp_rate is None else args.fp_rate
    if not 0.0 <= fp_rate < 1.0:
        raise _usage("--fp-rate must lie in [0, 1)")
    hosts = args.hosts if args.hosts is not None else cfg.simulate.hosts
    if hosts is not None and hosts < 2:
        raise _usage("--hosts must be >= 2")
    base = cfg.train.seed if args.seed is None else args.seed

    single = args.out is not None and args.out.endswith(".jsonl")
    if single and len(ids) * args.count != 1:
        raise _usage("a .jsonl --out path takes exactly one campaign; pass a directory instead")
    out_dir = Path(args.out).parent if single else _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    effective = {"templates": ids, "count": args.count, "seed": base, "hosts": hosts, "fp_rate": fp_rate,
                 "templates_file": cfg.simulate.templates_file}
    entries = []
    for tid in ids:
        for i in range(args.count):
            camp = run_template(templates[tid], base + i, hosts, fp_rate)
            path = Path(args.out) if single else out_dir / f"{camp.campaign_id}.jsonl"
            meta = {**camp.meta(), "config": effective, "version": __version__}
            write_alert_stream(path, camp.alerts, meta)
            entries.append({**camp.meta(), "file": path.name, "alerts": len(camp.alerts),
                            "label": "ransomware" if camp.is_ransomware else "other"})
            print(f"{path}: {len(camp.alerts)} alerts ({entries[-1]['label']})")
    manifest = Path(str(args.out) + ".manifest.json") if single else out_dir / "manifest.json"
    _write_json(manifest, {"config": effective, "campaigns": entries})
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    streams = _expand(args.streams, "*.jsonl")
    alerts = [a for p in streams for a in _read_stream(p)[1]]
    try:
        profiles = fit_tool_profiles(alerts)
    except ValueError as exc:
        raise _data(str(exc)) from None
    out = Path(args.profiles) if args.profiles else _out_dir(args) / "profiles.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_profiles(out, profiles, cfg.ingest.horizon_seconds,
                  meta={"config": cfg.to_dict(), "streams": [p.name for p in streams]})
    for tool, prof in profiles.items():
        print(f"{tool}: risk [{prof.risk_min:g}, {prof.risk_max:g}] severity [{prof.severity_min:g}, "
              f"{prof.severity_max:g}] {len(prof.categories)} categories")
    print(f"profiles written to {out}")
    return EXIT_OK


def cmd_build_graphs(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    if args.stride < 1:
        raise _usage("--stride must be >= 1")
    streams = _expand(args.streams, "*.jsonl")
    loaded = [(p, *_read_stream(p)) for p in streams]
    out = _out_dir(args)
    if args.fit_profiles:
        try:
            profiles = fit_tool_profiles(a for _, _, alerts in loaded for a in alerts)
        except ValueError as exc:
            raise _data(str(exc)) from None
        horizon = cfg.ingest.horizon_seconds
        save_profiles(out / "profiles.json", profiles, horizon, meta={"config": cfg.to_dict()})
    elif args.profiles:
        try:
            profiles, horizon = load_profiles(args.profiles)
        except (OSError, ValueError, KeyError) as exc:
            raise _usage(f"cannot load profiles: {exc}") from None
    else:
        raise _usage("pass --profiles FILE or --fit-profiles")

    total = 0
    for path, meta, alerts in loaded:
        if not alerts:
            raise _data(f"{path}: empty stream")
        label = meta.get("is_ransomware", args.label == "ransomware" if args.label else None)
        if label is None:
            raise _usage(f"{path}: stream has no label; pass --label")
        cls = meta.get("template_id", args.campaign_class or path.stem)
        cid = meta.get("campaign_id", path.stem)
        try:
            unified = normalize_stream(alerts, profiles, horizon)
        except (UnknownCategoryError, UnknownToolError) as exc:
            raise _data(f"{path}: {exc}") from None
        series = build_series(unified, bool(label), cls, cid, stride=args.stride, source=path.name)
        dump_series(series, out / f"{cid}.series.jsonl",
                    meta={"config": cfg.to_dict(), "stream": meta, "horizon_seconds": horizon})
        total += len(series)
        print(f"{cid}: {len(alerts)} alerts -> {len(series)} snapshots")
    print(f"{len(loaded)} series, {total} snapshots written to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    split = _split(args.split)
    series = _select(_load_series_files(args.series), split["train"] if split else None, "train")
    graphs = snapshots_of(series)
    try:
        graphs = balance_one_to_one(graphs, cfg.train.seed)
    except ValueError as exc:
        raise _data(f"training set: {exc}") from None
    out = _out_dir(args)
    ckpt = out / "checkpoint.bin"
    meta = {"config": cfg.to_dict(), "train_campaigns": sorted(s.campaign_id for s in series),
            "train_graphs": len(graphs), "version": __version__}
    try:
        state = train(graphs, cfg.train, cfg.model, checkpoint_path=ckpt, resume_from=args.resume,
                      meta=meta, stop_after=args.stop_after)
    except (CheckpointError, OSError) as exc:
        raise CliError(f"cannot resume: {exc}", EXIT_MODEL) from None
    _write_json(out / "train_log.json", {"meta": meta, "phase": state.phase, "log": state.log})
    print(f"trained on {len(graphs)} graphs from {len(series)} campaigns; checkpoint {ckpt}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _run_config(args) if args.config else None
    model, header = _load_checkpoint(args.checkpoint, cfg)
    split = _split(args.split)
    series = _select(_load_series_files(args.series), split["test"] if split else None, "test")
    scores = score_series(model, series)
    meta = {"config": cfg.to_dict() if cfg else None, "checkpoint_meta": header.get("meta", {}),
            "model_config": header["model_config"], "version": __version__}
    try:
        report = report_from_scores(series, scores, args.fractions, args.threshold, meta)
    except ValueError as exc:
        raise _data(str(exc)) from None
    out = _out_dir(args)
    report.write(out / "report.json")
    (out / "report.txt").write_text(report.table() + "\n", encoding="utf-8")
    with open(out / "scores.jsonl", "w", encoding="utf-8") as fh:
        for ser, sc in zip(series, scores):
            for snap, p in zip(ser.snapshots, sc):
                fh.write(json.dumps({"campaign_id": ser.campaign_id, "snapshot_index": snap.snapshot_index,
                                     "label_is_ransomware": ser.label_is_ransomware,
                                     "probability": float(p)}) + "\n")
    print(report.table())
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    cfg = _run_config(args) if args.config else None
    model, _ = _load_checkpoint(args.checkpoint, cfg)
    try:
        profiles, horizon = load_profiles(args.profiles)
    except (OSError, ValueError, KeyError) as exc:
        raise _usage(f"cannot load profiles: {exc}") from None
    model.eval()
    source = open(args.stream, encoding="utf-8") if args.stream != "-" else sys.stdin
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    builder = GraphBuilder(args.campaign_id, False, "")
    skipped = 0
    start = None
    try:
        for line_no, text in iter_stream_lines(source):
            try:
                raw = parse_alert_line(text, line_no)
                prof = profiles.get(raw.tool_id)
                if prof is None:
                    raise UnknownToolError(f"line {line_no}: no profile for tool {raw.tool_id!r}")
                if start is None:
                    start = raw.timestamp
                alert = normalize_alert(raw, prof, start, horizon, builder.num_nodes)
            except (AlertParseError, UnknownCategoryError, UnknownToolError, ValueError) as exc:
                logger.warning("skipping alert: %s", exc)
                skipped += 1
                continue
            snap = builder.add_alert(alert)
            p = float(model.predict_proba([snap])[0])
            sink.write(json.dumps({"arrival_index": alert.arrival_index, "size": snap.num_nodes,
                                   "probability": p, "verdict": p >= args.threshold}) + "\n")
            sink.flush()
    finally:
        if source is not sys.stdin:
            source.close()
        if sink is not sys.stdout:
            sink.close()
    if skipped:
        logger.error("%d alert(s) skipped", skipped)
        return EXIT_DATA
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    for path in args.reports:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            table = render_table(doc)
        except (OSError, ValueError, KeyError) as exc:
            raise _data(f"{path}: {exc}") from None
        if args.format == "json":
            print(json.dumps(doc["metrics"], indent=2))
        else:
            print(f"== {path}")
            print(table)
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    bench = BenchmarkConfig(train=cfg.train, model=cfg.model, fp_rate=cfg.simulate.fp_rate,
                            horizon_seconds=cfg.ingest.horizon_seconds)
    split = SPLITS[args.split]
    out = _out_dir(args)
    results = []
    for seed in args.seeds:
        prepared = prepare(split, seed, bench)
        for emb in ([True, False] if args.baseline else [True]):
            r = run_benchmark(split, seed, bench, emb, prepared)
            results.append(r)
            print(f"seed {seed} {'full' if emb else 'frozen-random'}: auc {r.auc():.3f} "
                  f"(40% {r.auc(0.4):.3f}, 60% {r.auc(0.6):.3f}) in {r.seconds:.0f}s")
    full = [r for r in results if r.embedding_training]
    doc = {"config": bench.to_dict(), "split": split.name, "results": [r.to_dict() for r in results],
           "summary": {str(f): summarize(full, f) for f in (0.2, 0.4, 0.6, 1.0)}}
    _write_json(out / f"benchmark-{split.name}.json", doc)
    print(f"mean auc {doc['summary']['1.0']['mean']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_flags(nested: bool) -> argparse.ArgumentParser:
        # flags repeated after the command must not reset values given before it
        kw = {"default": argparse.SUPPRESS} if nested else {}
        flags = argparse.ArgumentParser(add_help=False)
        flags.add_argument("--config", help="YAML or JSON run configuration", **kw)
        flags.add_argument("--seed", type=int, help="overrides the configured seed", **kw)
        flags.add_argument("--out", help="output directory (or file where noted)", **kw)
        flags.add_argument("-v", "--verbose", action="store_true", **kw)
        return flags

    common = global_flags(nested=True)
    parser = argparse.ArgumentParser(prog="ransomgraph", description=__doc__.splitlines()[0],
                                     parents=[global_flags(nested=False)])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic campaign alert streams")
    p.add_argument("--template", action="append", required=True, help="template id(s), comma separated, or 'all'")
    p.add_argument("--count", type=int, default=1, help="instances per template (seeds base, base+1, ...)")
    p.add_argument("--hosts", type=int)
    p.add_argument("--fp-rate", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", parents=[common], help="fit per-tool normalization profiles")
    p.add_argument("streams", nargs="+")
    p.add_argument("--profiles", help="profiles file to write (default OUT/profiles.json)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graphs", parents=[common], help="build snapshot series from alert streams")
    p.add_argument("streams", nargs="+")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--profiles")
    g.add_argument("--fit-profiles", action="store_true")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--label", choices=["ransomware", "other"], help="label for streams without metadata")
    p.add_argument("--campaign-class", help="class for streams without metadata")
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train", parents=[common], help="run the three-step training")
    p.add_argument("series", nargs="+", help="series files or directories")
    p.add_argument("--split", help="YAML/JSON with 'train' and 'test' campaign or template ids")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--stop-after", type=int, help="stop after this many epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score test series and write a report")
    p.add_argument("series", nargs="+")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.2, 0.4, 0.6, 1.0])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", parents=[common], help="score an alert stream alert by alert")
    p.add_argument("stream", help="alert stream file, or - for stdin")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--campaign-id", default="live")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", parents=[common], help="render evaluation reports as tables")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("benchmark", parents=[common], help="run the held-out-template benchmark")
    p.add_argument("--split", choices=sorted(SPLITS), default="mixed")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--baseline", action="store_true", help="also train on frozen random embeddings")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
