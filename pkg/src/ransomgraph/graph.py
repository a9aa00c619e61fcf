"""Incremental alert-graph construction.

Every host owns a temporal chain of alert nodes (``A0 -> A1 -> ...``). An alert
that names a destination host adds a cross edge from the new node to the most
recent node of the destination's chain. If the destination has no alerts yet,
the link is held as pending and materializes when that host's first alert
arrives. One immutable snapshot is emitted per ingested alert.

Snapshots share one append-only store per campaign: every edge added by alert k
touches node k, so the edge set of snapshot k is a prefix of the edge log and a
snapshot is just (store, node count, edge count).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .ingest import UnifiedAlert

SERIES_FORMAT = "alert-graph-series"
SNAPSHOT_FORMAT = "alert-graph-snapshot"
FORMAT_VERSION = 1
PREFIX_FRACTIONS = (0.2, 0.4, 0.6, 1.0)


class SequencingError(ValueError):
    """Alerts were offered out of arrival order."""


@dataclass(frozen=True)
class AlertNode:
    node_id: int
    features: tuple[float, float, float, float]
    host: str
    host_seq: int


class _Store:
    """Append-only node table and edge log shared by a campaign's snapshots."""

    def __init__(self) -> None:
        self.nodes: list[AlertNode] = []
        self.edges: list[tuple[int, int]] = []
        self._feat = np.zeros((16, 4))
        self._edge = np.zeros((16, 2), dtype=np.int64)

    def append(self, node: AlertNode, new_edges: Sequence[tuple[int, int]]) -> None:
        n, m = len(self.nodes), len(self.edges)
        if n == len(self._feat):
            self._feat = np.concatenate([self._feat, np.zeros_like(self._feat)])
        while m + len(new_edges) > len(self._edge):
            self._edge = np.concatenate([self._edge, np.zeros_like(self._edge)])
        self._feat[n] = node.features
        for i, e in enumerate(new_edges):
            self._edge[m + i] = e
        self.nodes.append(node)
        self.edges.extend(new_edges)

    def features(self, n: int) -> np.ndarray:
        out = self._feat[:n].copy()
        out.flags.writeable = False
        return out

    def edge_array(self, m: int) -> np.ndarray:
        out = self._edge[:m].copy()
        out.flags.writeable = False
        return out


class AlertGraphSnapshot:
    """Immutable alert graph after ``snapshot_index + 1`` alerts."""

    __slots__ = ("campaign_id", "label_is_ransomware", "campaign_class", "num_nodes", "num_edges", "_store")

    def __init__(self, store: _Store, num_nodes: int, num_edges: int, campaign_id: str,
                 label_is_ransomware: bool, campaign_class: str) -> None:
        object.__setattr__(self, "_store", store)
        object.__setattr__(self, "num_nodes", num_nodes)
        object.__setattr__(self, "num_edges", num_edges)
        object.__setattr__(self, "campaign_id", campaign_id)
        object.__setattr__(self, "label_is_ransomware", label_is_ransomware)
        object.__setattr__(self, "campaign_class", campaign_class)

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("AlertGraphSnapshot is immutable")

    @property
    def snapshot_index(self) -> int:
        return self.num_nodes - 1

    @property
    def nodes(self) -> tuple[AlertNode, ...]:
        return tuple(self._store.nodes[: self.num_nodes])

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(self._store.edges[: self.num_edges])

    @property
    def features(self) -> np.ndarray:
        """N x 4 read-only feature matrix in arrival order."""
        return self._store.features(self.num_nodes)

    @property
    def edge_array(self) -> np.ndarray:
        """E x 2 read-only array of (source, target) node ids."""
        return self._store.edge_array(self.num_edges)

    def header(self) -> dict[str, Any]:
        return {
            "campaign_id": self.campaign_id,
            "snapshot_index": self.snapshot_index,
            "label_is_ransomware": self.label_is_ransomware,
            "campaign_class": self.campaign_class,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AlertGraphSnapshot):
            return NotImplemented
        return (
            self.header() == other.header()
            and self.nodes == other.nodes
            and self.edges == other.edges
        )

    def __hash__(self) -> int:
        return hash((self.campaign_id, self.num_nodes, self.num_edges))

    def __repr__(self) -> str:
        return (f"AlertGraphSnapshot({self.campaign_id!r}, index={self.snapshot_index}, "
                f"nodes={self.num_nodes}, edges={self.num_edges})")

    def to_record(self) -> dict[str, Any]:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": FORMAT_VERSION,
            **self.header(),
            "nodes": [[n.node_id, n.host, n.host_seq, *n.features] for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


class GraphBuilder:
    """Single-writer state machine growing one campaign's alert graph."""

    def __init__(self, campaign_id: str, label_is_ransomware: bool, campaign_class: str) -> None:
        self.campaign_id = campaign_id
        self.label_is_ransomware = bool(label_is_ransomware)
        self.campaign_class = campaign_class
        self._store = _Store()
        self._latest: dict[str, int] = {}
        self._host_len: dict[str, int] = {}
        self._pending: dict[str, list[int]] = {}
        self.snapshots_emitted = 0

    @property
    def num_nodes(self) -> int:
        return len(self._store.nodes)

    def add_alert(self, alert: UnifiedAlert) -> AlertGraphSnapshot:
        node_id = self.num_nodes
        if alert.arrival_index != node_id:
            raise SequencingError(f"expected arrival_index {node_id}, got {alert.arrival_index}")
        host = alert.source_host
        new_edges: list[tuple[int, int]] = []

        prev = self._latest.get(host)
        if prev is not None:
            new_edges.append((prev, node_id))
        else:
            for src in self._pending.pop(host, ()):
                new_edges.append((src, node_id))

        dst = alert.destination_host
        if dst is not None and dst != host:
            target = self._latest.get(dst)
            if target is not None:
                new_edges.append((node_id, target))
            else:
                self._pending.setdefault(dst, []).append(node_id)

        seq = self._host_len.get(host, 0)
        self._store.append(AlertNode(node_id, alert.features, host, seq), new_edges)
        self._host_len[host] = seq + 1
        self._latest[host] = node_id
        self.snapshots_emitted += 1
        return AlertGraphSnapshot(self._store, node_id + 1, len(self._store.edges),
                                  self.campaign_id, self.label_is_ransomware, self.campaign_class)


def new_builder(campaign_id: str, label_is_ransomware: bool, campaign_class: str) -> GraphBuilder:
    return GraphBuilder(campaign_id, label_is_ransomware, campaign_class)


@dataclass(frozen=True)
class CampaignGraphSeries:
    campaign_id: str
    label_is_ransomware: bool
    campaign_class: str
    snapshots: tuple[AlertGraphSnapshot, ...]
    source: str | None = None
    stride: int = 1

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)


def build_series(
    alerts: Sequence[UnifiedAlert],
    label_is_ransomware: bool,
    campaign_class: str,
    campaign_id: str | None = None,
    stride: int = 1,
    source: str | None = None,
) -> CampaignGraphSeries:
    """Batch construction of a campaign's snapshot series.

    Edges are computed in a single pass that records, per node, how many edges
    exist once it is added; snapshots are then cut from that log. Only every
    ``stride``-th snapshot (indices stride-1, 2*stride-1, ...) is retained.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    campaign_id = campaign_class if campaign_id is None else campaign_id
    for i, a in enumerate(alerts):
        if a.arrival_index != i:
            raise SequencingError(f"alert at position {i} has arrival_index {a.arrival_index}")

    hosts = [a.source_host for a in alerts]
    host_seq = np.zeros(len(alerts), dtype=np.int64)
    chain_prev = np.full(len(alerts), -1, dtype=np.int64)
    first_node: dict[str, int] = {}
    seen: dict[str, int] = {}
    for i, h in enumerate(hosts):
        if h in seen:
            chain_prev[i] = seen[h]
            host_seq[i] = host_seq[seen[h]] + 1
        else:
            first_node[h] = i
        seen[h] = i

    # cross edges; an edge naming a host with no alerts yet attaches to its first node
    incoming_pending: dict[int, list[int]] = {}
    cross: dict[int, int] = {}
    latest: dict[str, int] = {}
    for i, a in enumerate(alerts):
        d = a.destination_host
        if d is not None and d != a.source_host:
            if d in latest:
                cross[i] = latest[d]
            elif d in first_node and first_node[d] > i:
                incoming_pending.setdefault(first_node[d], []).append(i)
        latest[a.source_host] = i

    store = _Store()
    counts = []
    for i, a in enumerate(alerts):
        edges = []
        if chain_prev[i] >= 0:
            edges.append((int(chain_prev[i]), i))
        edges.extend((s, i) for s in incoming_pending.get(i, ()))
        if i in cross:
            edges.append((i, cross[i]))
        store.append(AlertNode(i, a.features, hosts[i], int(host_seq[i])), edges)
        counts.append(len(store.edges))

    snaps = tuple(
        AlertGraphSnapshot(store, k + 1, counts[k], campaign_id, bool(label_is_ransomware), campaign_class)
        for k in range(stride - 1, len(alerts), stride)
    )
    return CampaignGraphSeries(campaign_id, bool(label_is_ransomware), campaign_class, snaps, source, stride)


def prefix_length(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    # rounding guards against 0.6 * 10 == 6.000000000000001
    return min(n, math.ceil(round(fraction * n, 9)))


def prefix(series: CampaignGraphSeries, fraction: float) -> CampaignGraphSeries:
    """The first ceil(fraction * n) snapshots of ``series``."""
    k = prefix_length(len(series.snapshots), fraction)
    return CampaignGraphSeries(series.campaign_id, series.label_is_ransomware, series.campaign_class,
                               series.snapshots[:k], series.source, series.stride)


def dump_series(series: CampaignGraphSeries, path: str | Path, meta: Mapping[str, Any] | None = None) -> None:
    """Write a series as a header line followed by one delta line per node.

    Deltas cover every node of the last retained snapshot, so any snapshot in
    the campaign can be replayed, not only the retained ones.
    """
    snaps = series.snapshots
    last = snaps[-1] if snaps else None
    header = {
        "format": SERIES_FORMAT,
        "version": FORMAT_VERSION,
        "campaign_id": series.campaign_id,
        "label_is_ransomware": series.label_is_ransomware,
        "campaign_class": series.campaign_class,
        "source": series.source,
        "stride": series.stride,
        "retained": [s.snapshot_index for s in snaps],
        "meta": dict(meta) if meta is not None else {},
    }
    lines = [json.dumps(header, sort_keys=True)]
    if last is not None:
        nodes = last.nodes
        edges = last.edges
        j = 0
        for node in nodes:
            new = []
            while j < len(edges) and max(edges[j]) == node.node_id:
                new.append(list(edges[j]))
                j += 1
            lines.append(json.dumps({"node": [node.node_id, node.host, node.host_seq, *node.features],
                                     "edges": new}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_series_header(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
    if header.get("format") != SERIES_FORMAT:
        raise ValueError(f"{path}: not an alert-graph series file")
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported series version {header.get('version')!r}")
    return header


def load_series(path: str | Path) -> CampaignGraphSeries:
    header = read_series_header(path)
    store = _Store()
    counts = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            node_id, host, host_seq, *feat = rec["node"]
            store.append(AlertNode(node_id, tuple(float(f) for f in feat), host, host_seq),
                         [tuple(e) for e in rec["edges"]])
            counts.append(len(store.edges))
    label = bool(header["label_is_ransomware"])
    snaps = tuple(
        AlertGraphSnapshot(store, k + 1, counts[k], header["campaign_id"], label, header["campaign_class"])
        for k in header["retained"]
    )
    return CampaignGraphSeries(header["campaign_id"], label, header["campaign_class"], snaps,
                               header.get("source"), int(header.get("stride", 1)))


def snapshots_of(series_list: Iterable[CampaignGraphSeries]) -> list[AlertGraphSnapshot]:
    return [s for series in series_list for s in series.snapshots]
