"""Alert parsing and normalization into the four-feature unified representation.

Each tool reports on its own native scale, so risk and severity are min-max
scaled per tool and categories are mapped to per-tool ordinals in [0, 1].
Timestamps become the elapsed fraction of a fixed horizon measured from the
first alert of the campaign.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

logger = logging.getLogger(__name__)

DEFAULT_HORIZON_SECONDS = 7 * 24 * 3600
PROFILES_FORMAT = "tool-profiles"
PROFILES_VERSION = 1
STREAM_META_KEY = "_meta"

_REQUIRED_FIELDS = ("tool", "ts", "risk", "severity", "category", "src")


class AlertParseError(ValueError):
    """A record in an alert stream could not be parsed."""

    def __init__(self, message: str, field: str | None = None, line_no: int | None = None):
        self.field = field
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        what = f"field {field!r}: " if field else ""
        super().__init__(f"{where}{what}{message}")


class UnknownCategoryError(ValueError):
    """Category was never observed for its tool when the profiles were fit."""


class UnknownToolError(KeyError):
    pass


@dataclass(frozen=True)
class RawAlert:
    tool_id: str
    timestamp: int
    risk_score: float
    severity_score: float
    category: str
    source_host: str
    destination_host: str | None = None

    def to_record(self) -> dict[str, Any]:
        return {
            "tool": self.tool_id,
            "ts": self.timestamp,
            "risk": self.risk_score,
            "severity": self.severity_score,
            "category": self.category,
            "src": self.source_host,
            "dst": self.destination_host,
        }


@dataclass(frozen=True)
class ToolProfile:
    tool_id: str
    risk_min: float
    risk_max: float
    severity_min: float
    severity_max: float
    categories: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.risk_min > self.risk_max:
            raise ValueError(f"{self.tool_id}: risk_min > risk_max")
        if self.severity_min > self.severity_max:
            raise ValueError(f"{self.tool_id}: severity_min > severity_max")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"{self.tool_id}: duplicate categories in registry")

    def ordinal(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise UnknownCategoryError(
                f"unknown category {category!r} for tool {self.tool_id!r}"
            ) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool_id": self.tool_id,
            "risk_min": self.risk_min,
            "risk_max": self.risk_max,
            "severity_min": self.severity_min,
            "severity_max": self.severity_max,
            "categories": list(self.categories),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ToolProfile:
        return cls(
            tool_id=str(d["tool_id"]),
            risk_min=float(d["risk_min"]),
            risk_max=float(d["risk_max"]),
            severity_min=float(d["severity_min"]),
            severity_max=float(d["severity_max"]),
            categories=tuple(d["categories"]),
        )


@dataclass(frozen=True)
class UnifiedAlert:
    time_feature: float
    risk_norm: float
    severity_norm: float
    category_norm: float
    source_host: str
    destination_host: str | None
    tool_id: str
    arrival_index: int

    @property
    def features(self) -> tuple[float, float, float, float]:
        return (self.time_feature, self.risk_norm, self.severity_norm, self.category_norm)


def _number(record: Mapping[str, Any], key: str, line_no: int | None) -> float:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise AlertParseError(f"expected a number, got {value!r}", key, line_no)
    value = float(value)
    if not math.isfinite(value):
        raise AlertParseError("not finite", key, line_no)
    return value


def _text(record: Mapping[str, Any], key: str, line_no: int | None) -> str:
    value = record[key]
    if not isinstance(value, str) or not value:
        raise AlertParseError(f"expected a non-empty string, got {value!r}", key, line_no)
    return value


def alert_from_record(record: Mapping[str, Any], line_no: int | None = None) -> RawAlert:
    if not isinstance(record, Mapping):
        raise AlertParseError("record is not an object", None, line_no)
    for key in _REQUIRED_FIELDS:
        if key not in record:
            raise AlertParseError("missing", key, line_no)

    ts = record["ts"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts != int(ts):
        raise AlertParseError(f"expected integer seconds, got {ts!r}", "ts", line_no)
    if ts < 0:
        raise AlertParseError("negative timestamp", "timestamp", line_no)

    src = _text(record, "src", line_no)
    dst = record.get("dst")
    if dst is not None:
        if not isinstance(dst, str):
            raise AlertParseError(f"expected string or null, got {dst!r}", "dst", line_no)
        if dst == "":
            dst = None
        elif dst == src:
            logger.debug("self-event on %s: destination dropped", src)
            dst = None

    return RawAlert(
        tool_id=_text(record, "tool", line_no),
        timestamp=int(ts),
        risk_score=_number(record, "risk", line_no),
        severity_score=_number(record, "severity", line_no),
        category=_text(record, "category", line_no),
        source_host=src,
        destination_host=dst,
    )


def parse_alert_line(line: str, line_no: int | None = None) -> RawAlert:
    """Parse one JSON record of the alert-stream format.

    Unknown tools are accepted here; they only fail at normalization time.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise AlertParseError(f"invalid JSON ({exc.msg})", None, line_no) from None
    return alert_from_record(record, line_no)


def iter_stream_lines(lines: Iterable[str]) -> Iterator[tuple[int, str]]:
    """Yield (line_no, text) for non-blank, non-header lines."""
    for i, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("{" + json.dumps(STREAM_META_KEY)):
            continue
        yield i, text


def read_alert_stream(path: str | Path) -> tuple[dict[str, Any], list[RawAlert]]:
    """Read a stream file. Returns (header metadata, alerts)."""
    meta: dict[str, Any] = {}
    alerts = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("{" + json.dumps(STREAM_META_KEY)):
                meta = json.loads(text)[STREAM_META_KEY]
                continue
            alerts.append(parse_alert_line(text, i))
    return meta, alerts


def write_alert_stream(path: str | Path, alerts: Iterable[RawAlert], meta: Mapping[str, Any] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({STREAM_META_KEY: meta}, sort_keys=True) + "\n")
        for alert in alerts:
            fh.write(json.dumps(alert.to_record()) + "\n")


def fit_tool_profiles(alerts: Iterable[RawAlert]) -> dict[str, ToolProfile]:
    """Per-tool extrema and sorted category registries over ``alerts``."""
    risks: dict[str, list[float]] = defaultdict(list)
    sevs: dict[str, list[float]] = defaultdict(list)
    cats: dict[str, set[str]] = defaultdict(set)
    for a in alerts:
        risks[a.tool_id].append(a.risk_score)
        sevs[a.tool_id].append(a.severity_score)
        cats[a.tool_id].add(a.category)
    if not risks:
        raise ValueError("no alerts")
    return {
        tool: ToolProfile(
            tool_id=tool,
            risk_min=min(risks[tool]),
            risk_max=max(risks[tool]),
            severity_min=min(sevs[tool]),
            severity_max=max(sevs[tool]),
            categories=tuple(sorted(cats[tool])),
        )
        for tool in sorted(risks)
    }


def _minmax(value: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.5
    # frozen profiles can see values outside the fitted range at inference
    return min(1.0, max(0.0, (value - lo) / (hi - lo)))


def normalize_alert(
    raw: RawAlert,
    profile: ToolProfile,
    campaign_start: int,
    horizon: float = DEFAULT_HORIZON_SECONDS,
    arrival_index: int = 0,
) -> UnifiedAlert:
    if profile.tool_id != raw.tool_id:
        raise ValueError(f"profile is for {profile.tool_id!r}, alert is from {raw.tool_id!r}")
    if raw.timestamp < campaign_start:
        raise ValueError("alert precedes campaign start")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n_cat = len(profile.categories)
    ordinal = profile.ordinal(raw.category)
    return UnifiedAlert(
        time_feature=min(1.0, (raw.timestamp - campaign_start) / horizon),
        risk_norm=_minmax(raw.risk_score, profile.risk_min, profile.risk_max),
        severity_norm=_minmax(raw.severity_score, profile.severity_min, profile.severity_max),
        category_norm=ordinal / (n_cat - 1) if n_cat > 1 else 0.5,
        source_host=raw.source_host,
        destination_host=raw.destination_host,
        tool_id=raw.tool_id,
        arrival_index=arrival_index,
    )


def normalize_stream(
    alerts: Sequence[RawAlert],
    profiles: Mapping[str, ToolProfile],
    horizon: float = DEFAULT_HORIZON_SECONDS,
    campaign_start: int | None = None,
) -> list[UnifiedAlert]:
    """Normalize a whole campaign; arrival indices follow stream order."""
    if not alerts:
        return []
    start = alerts[0].timestamp if campaign_start is None else campaign_start
    out = []
    for i, raw in enumerate(alerts):
        try:
            profile = profiles[raw.tool_id]
        except KeyError:
            raise UnknownToolError(f"no profile for tool {raw.tool_id!r}") from None
        out.append(normalize_alert(raw, profile, start, horizon, arrival_index=i))
    return out


def save_profiles(path: str | Path, profiles: Mapping[str, ToolProfile], horizon: float = DEFAULT_HORIZON_SECONDS,
                  meta: Mapping[str, Any] | None = None) -> None:
    doc = {
        "format": PROFILES_FORMAT,
        "version": PROFILES_VERSION,
        "horizon_seconds": horizon,
        "profiles": [profiles[k].to_dict() for k in sorted(profiles)],
    }
    if meta is not None:
        doc["meta"] = dict(meta)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_profiles(path: str | Path) -> tuple[dict[str, ToolProfile], float]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != PROFILES_FORMAT:
        raise ValueError(f"{path}: not a tool-profiles file")
    if doc.get("version") != PROFILES_VERSION:
        raise ValueError(f"{path}: unsupported profiles version {doc.get('version')!r}")
    profiles = {p["tool_id"]: ToolProfile.from_dict(p) for p in doc["profiles"]}
    return profiles, float(doc.get("horizon_seconds", DEFAULT_HORIZON_SECONDS))
