"""Edge perturbation and node dropping for contrastive views.

Augmented graphs no longer satisfy the per-host chain structure of built
snapshots; nothing downstream may rely on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentedGraph:
    campaign_id: str
    snapshot_index: int
    label_is_ransomware: bool
    campaign_class: str
    features: np.ndarray
    edge_array: np.ndarray
    node_ids: np.ndarray  # original node id of every surviving node

    @property
    def num_nodes(self) -> int:
        return len(self.features)

    @property
    def num_edges(self) -> int:
        return len(self.edge_array)


@dataclass(frozen=True)
class PerturbSpec:
    remove_fraction: float = 0.25
    add_fraction: float = 0.10
    seed: int | None = None

    def __post_init__(self) -> None:
        for name in ("remove_fraction", "add_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _header(graph) -> dict:
    return dict(
        campaign_id=getattr(graph, "campaign_id", ""),
        snapshot_index=getattr(graph, "snapshot_index", len(graph.features) - 1),
        label_is_ransomware=getattr(graph, "label_is_ransomware", False),
        campaign_class=getattr(graph, "campaign_class", ""),
    )


def _node_ids(graph) -> np.ndarray:
    ids = getattr(graph, "node_ids", None)
    return np.arange(len(graph.features)) if ids is None else np.asarray(ids)


def _sample_new_edges(n: int, existing: set[tuple[int, int]], count: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    free = n * (n - 1) - len(existing)
    count = min(count, free)
    if count <= 0:
        return []
    if n * (n - 1) <= 4 * (len(existing) + count) or n * (n - 1) <= 4096:
        cand = [(u, v) for u in range(n) for v in range(n) if u != v and (u, v) not in existing]
        pick = rng.choice(len(cand), size=count, replace=False)
        return [cand[i] for i in sorted(pick)]
    out: list[tuple[int, int]] = []
    taken = set(existing)
    while len(out) < count:
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        if u != v and (u, v) not in taken:
            taken.add((u, v))
            out.append((u, v))
    return out


def edge_perturb(graph, spec: PerturbSpec, seed: int | np.random.Generator | None = None) -> AugmentedGraph:
    """Remove round(p_r |E|) edges, then add round(p_a |E|) new directed edges.

    Added edges avoid self-loops and every edge of the original graph,
    including the ones just removed.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    feats = np.asarray(graph.features)
    edges = np.asarray(graph.edge_array, dtype=np.int64).reshape(-1, 2)
    n, m = len(feats), len(edges)
    n_remove = round_half_up(spec.remove_fraction * m)
    n_add = round_half_up(spec.add_fraction * m)
    keep = np.ones(m, dtype=bool)
    if n_remove:
        keep[rng.choice(m, size=n_remove, replace=False)] = False
    kept = edges[keep]
    added = _sample_new_edges(n, set(map(tuple, edges.tolist())), n_add, rng) if n_add else []
    if added:
        kept = np.concatenate([kept, np.asarray(added, dtype=np.int64)])
    return AugmentedGraph(**_header(graph), features=feats, edge_array=kept, node_ids=_node_ids(graph))


def node_drop(graph, fraction: float, seed: int | np.random.Generator | None = None) -> AugmentedGraph:
    """Drop round(f N) random nodes with their edges; survivors keep arrival order."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    feats = np.asarray(graph.features)
    edges = np.asarray(graph.edge_array, dtype=np.int64).reshape(-1, 2)
    n = len(feats)
    n_drop = round_half_up(fraction * n)
    if n_drop >= n:
        raise ValueError("node dropping would leave an empty graph")
    alive = np.ones(n, dtype=bool)
    if n_drop:
        alive[rng.choice(n, size=n_drop, replace=False)] = False
    survivors = np.flatnonzero(alive)
    remap = np.full(n, -1, dtype=np.int64)
    remap[survivors] = np.arange(len(survivors))
    ok = alive[edges[:, 0]] & alive[edges[:, 1]] if len(edges) else np.zeros(0, dtype=bool)
    return AugmentedGraph(**_header(graph), features=feats[survivors], edge_array=remap[edges[ok]].reshape(-1, 2),
                          node_ids=_node_ids(graph)[survivors])
