"""Model assembly: three GIN stacks with windowed transformer readouts, two
cross-stitched convolutional projection heads, a sum-readout classifier and
the sub-center ArcFace centers used in metric learning."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from typing import Any, Mapping, Protocol, Sequence

import numpy as np
import torch
from torch import nn

from .layers import (
    ClassifierHead,
    GINStack,
    ProjectionHeads,
    SubCenterArcFaceWeights,
    TransformerReadout,
    sinusoidal_encoding,
    sorted_column_sum,
    stack_channels,
    window_gather,
)


class StateError(RuntimeError):
    pass


class GraphLike(Protocol):
    @property
    def features(self) -> np.ndarray: ...

    @property
    def edge_array(self) -> np.ndarray: ...


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 4
    gin_layers: int = 3
    hidden_dim: int = 32
    window: int = 120
    num_stacks: int = 3
    transformer_heads: int = 4
    transformer_ff_dim: int = 64
    transformer_layers: int = 1
    conv_channels: tuple[int, ...] = (8, 16)
    conv_kernel: int = 3
    conv_pool: int = 2
    embedding_dim: int = 64
    classifier_widths: tuple[int, ...] = (96, 64, 32, 1)
    epsilon_learnable: bool = True
    cross_stitch_init: tuple[float, float] = (0.9, 0.1)
    num_campaign_classes: int = 0
    arcface_subcenters: int = 3

    def __post_init__(self) -> None:
        if self.window != 120:
            raise ValueError("window must be 120 (the most recent 120 alerts)")
        if self.feature_dim != 4:
            raise ValueError("feature_dim must be 4 (time, risk, severity, category)")
        dims = (self.gin_layers, self.hidden_dim, self.num_stacks, self.transformer_heads,
                self.transformer_ff_dim, self.transformer_layers, self.embedding_dim, self.arcface_subcenters)
        if min(dims) <= 0 or min(self.conv_channels) <= 0 or min(self.classifier_widths) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.classifier_widths[0] != self.gin_layers * self.hidden_dim:
            raise ValueError("classifier input width must equal gin_layers * hidden_dim")
        if self.classifier_widths[-1] != 1:
            raise ValueError("classifier must end in a single output")
        if self.num_campaign_classes < 0:
            raise ValueError("num_campaign_classes must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["classifier_widths"] = list(self.classifier_widths)
        d["cross_stitch_init"] = list(self.cross_stitch_init)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ModelConfig:
        d = dict(d)
        for key in ("conv_channels", "classifier_widths", "cross_stitch_init"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GraphBatch:
    """Several graphs concatenated into one node table.

    ``window_index`` (B x W) holds node rows of each graph's tail window in
    arrival order, -1 for padding. ``graph_ptr`` delimits each graph's rows.
    """

    x: torch.Tensor
    src: torch.Tensor
    dst: torch.Tensor
    graph_ptr: list[int]
    window_index: torch.Tensor
    full: bool

    @property
    def num_graphs(self) -> int:
        return len(self.graph_ptr) - 1


def receptive_nodes(num_nodes: int, edges: np.ndarray, seeds: np.ndarray, hops: int) -> np.ndarray:
    """Boolean mask of nodes within ``hops`` incoming steps of ``seeds``."""
    keep = np.zeros(num_nodes, dtype=bool)
    keep[seeds] = True
    if len(edges) == 0:
        return keep
    src, dst = edges[:, 0], edges[:, 1]
    for _ in range(hops):
        grow = src[keep[dst]]
        before = keep.sum()
        keep[grow] = True
        if keep.sum() == before:
            break
    return keep


def make_batch(graphs: Sequence[GraphLike], window: int, hops: int, full: bool) -> GraphBatch:
    """Batch graphs for the model.

    With ``full=False`` each graph is cut down to the nodes its tail window can
    see through ``hops`` GIN layers; window rows come out identical to a
    full-graph pass, at a fraction of the cost on long campaigns.
    """
    xs, srcs, dsts, ptr, rows = [], [], [], [0], []
    offset = 0
    for g in graphs:
        feats = np.asarray(g.features, dtype=np.float64)
        edges = np.asarray(g.edge_array, dtype=np.int64).reshape(-1, 2)
        n = len(feats)
        if n == 0:
            raise ValueError("empty snapshot")
        tail = np.arange(max(0, n - window), n)
        if full:
            keep_idx = np.arange(n)
            sub_edges = edges
            win_rows = tail
        else:
            keep = receptive_nodes(n, edges, tail, hops)
            keep_idx = np.flatnonzero(keep)
            remap = np.full(n, -1, dtype=np.int64)
            remap[keep_idx] = np.arange(len(keep_idx))
            if len(edges):
                inside = keep[edges[:, 0]] & keep[edges[:, 1]]
                sub_edges = remap[edges[inside]]
            else:
                sub_edges = edges
            win_rows = remap[tail]
        xs.append(feats[keep_idx])
        srcs.append(sub_edges[:, 0] + offset)
        dsts.append(sub_edges[:, 1] + offset)
        row = np.full(window, -1, dtype=np.int64)
        row[window - len(win_rows):] = win_rows + offset
        rows.append(row)
        offset += len(keep_idx)
        ptr.append(offset)
    return GraphBatch(
        x=torch.from_numpy(np.concatenate(xs)),
        src=torch.from_numpy(np.concatenate(srcs)),
        dst=torch.from_numpy(np.concatenate(dsts)),
        graph_ptr=ptr,
        window_index=torch.from_numpy(np.stack(rows)),
        full=full,
    )


class AlertGraphModel(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        c = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.stacks = nn.ModuleList(
                GINStack(c.feature_dim, c.hidden_dim, c.gin_layers, c.epsilon_learnable) for _ in range(c.num_stacks)
            )
            self.readouts = nn.ModuleList(
                TransformerReadout(c.hidden_dim, c.transformer_heads, c.transformer_ff_dim, c.transformer_layers)
                for _ in range(c.num_stacks)
            )
            self.heads = ProjectionHeads(c.num_stacks, c.conv_channels, c.conv_kernel, c.conv_pool,
                                         c.window, c.hidden_dim, c.embedding_dim, c.cross_stitch_init)
            self.classifier = ClassifierHead(c.classifier_widths)
            self.arcface = (SubCenterArcFaceWeights(c.num_campaign_classes, c.arcface_subcenters, c.embedding_dim)
                            if c.num_campaign_classes > 0 else None)
        self.register_buffer("pe", sinusoidal_encoding(c.window, c.hidden_dim), persistent=False)

    # parameter groups -------------------------------------------------------
    def encoder_parameters(self) -> list[nn.Parameter]:
        return list(self.stacks.parameters()) + list(self.readouts.parameters())

    def head_parameters(self, head: str) -> list[nn.Parameter]:
        h = self.heads
        if head == "campaign":
            return list(h.campaign.parameters()) + list(h.campaign_out.parameters())
        if head == "contrastive":
            return list(h.contrastive.parameters()) + list(h.contrastive_out.parameters())
        raise ValueError(head)

    def cross_stitch_parameters(self) -> list[nn.Parameter]:
        return list(self.heads.stitches.parameters())

    def classifier_parameters(self) -> list[nn.Parameter]:
        return list(self.classifier.parameters())

    def arcface_parameters(self) -> list[nn.Parameter]:
        return [] if self.arcface is None else list(self.arcface.parameters())

    def non_classifier_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if not n.startswith("classifier.")]

    # forward pieces ---------------------------------------------------------
    def batch(self, graphs: Sequence[GraphLike], full: bool = False) -> GraphBatch:
        return make_batch(graphs, self.config.window, self.config.gin_layers, full)

    def gin(self, stack: int, batch: GraphBatch) -> list[torch.Tensor]:
        return self.stacks[stack](batch.x, batch.src, batch.dst)

    def windows(self, batch: GraphBatch, stacks: Sequence[int] | None = None) -> tuple[list[torch.Tensor], torch.Tensor]:
        """Transformer outputs (B x W x d, padded rows zero) for the given stacks."""
        stacks = range(self.config.num_stacks) if stacks is None else stacks
        outs = []
        mask = batch.window_index >= 0
        for s in stacks:
            h = self.gin(s, batch)[-1]
            seq, mask = window_gather(h, batch.window_index, self.pe)
            outs.append(self.readouts[s](seq, mask))
        return outs, mask

    def pooled_embedding(self, batch: GraphBatch, stack: int = 0) -> torch.Tensor:
        """Mean of the valid transformer positions of one stack (B x d)."""
        (out,), mask = self.windows(batch, [stack])
        return out.sum(dim=1) / mask.sum(dim=1, keepdim=True)

    def image(self, batch: GraphBatch) -> torch.Tensor:
        outs, _ = self.windows(batch)
        return stack_channels(outs)

    def project(self, batch: GraphBatch, stitch: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
        """(campaign embedding, contrastive embedding), both B x 64 unit rows."""
        return self.heads(self.image(batch), stitch)

    def graph_vectors(self, batch: GraphBatch) -> torch.Tensor:
        """Sum readout of the first stack's per-layer outputs (B x L*d)."""
        if not batch.full:
            raise ValueError("sum readout needs full graphs")
        reps = self.gin(0, batch)
        rows = []
        for g in range(batch.num_graphs):
            a, b = batch.graph_ptr[g], batch.graph_ptr[g + 1]
            rows.append(torch.cat([sorted_column_sum(h[a:b]) for h in reps]))
        return torch.stack(rows)

    def classify_vectors(self, vectors: torch.Tensor) -> torch.Tensor:
        """Logits for graph vectors."""
        return self.classifier(vectors)

    @torch.no_grad()
    def predict_proba(self, graphs: Sequence[GraphLike], batch_size: int = 64) -> np.ndarray:
        out = []
        for i in range(0, len(graphs), batch_size):
            vectors = self.graph_vectors(self.batch(graphs[i:i + batch_size], full=True))
            # one row at a time: BLAS rounds a 1-row product differently from a
            # batched one, and a score must not depend on its batch neighbours
            out.extend(torch.sigmoid(self.classify_vectors(v[None])) for v in vectors)
        return torch.cat(out).numpy() if out else np.zeros(0)


# single-graph operations ------------------------------------------------------

def gin_stack_forward(model: AlertGraphModel, graph: GraphLike, stack: int = 0) -> list[torch.Tensor]:
    """Per-layer node representations of a whole graph for one stack."""
    if len(graph.features) == 0:
        raise ValueError("empty snapshot")
    return model.gin(stack, model.batch([graph], full=True))


def transformer_readout(model: AlertGraphModel, seq: torch.Tensor, mask: torch.Tensor, stack: int = 0) -> torch.Tensor:
    return model.readouts[stack](seq[None], mask[None])[0]


def conv_head_forward(model: AlertGraphModel, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """3 x W x d map -> (campaign, contrastive) unit embeddings."""
    za, zb = model.heads(image[None])
    return za[0], zb[0]


def classifier_forward(model: AlertGraphModel, graph_vector: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(model.classifier(graph_vector))


def backward(loss: torch.Tensor) -> None:
    """Populate ``.grad`` of every trainable parameter reachable from ``loss``."""
    if loss.dim() != 0:
        raise ValueError("loss must be a scalar")
    if loss.grad_fn is None:
        raise StateError("backward without a recorded forward pass")
    loss.backward()


def parameter_digest(params: Sequence[tuple[str, torch.Tensor]]) -> str:
    h = hashlib.sha256()
    for name, p in params:
        h.update(name.encode())
        h.update(p.detach().contiguous().numpy().tobytes())
    return h.hexdigest()
