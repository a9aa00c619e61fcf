"""Differentiable building blocks. All tensors are float64."""

from __future__ import annotations

import logging
import math

import torch
import torch.nn.functional as F
from torch import nn

logger = logging.getLogger(__name__)

DTYPE = torch.float64


class GINLayer(nn.Module):
    """h_v <- ReLU(W((1 + eps) h_v + sum_{u -> v} h_u) + b)."""

    def __init__(self, in_dim: int, out_dim: int, learn_eps: bool = True) -> None:
        super().__init__()
        self.linear = nn.Linear(in_dim, out_dim, dtype=DTYPE)
        if learn_eps:
            self.eps = nn.Parameter(torch.zeros(1, dtype=DTYPE))
        else:
            self.register_buffer("eps", torch.zeros(1, dtype=DTYPE))

    def forward(self, h: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        agg = torch.zeros_like(h).index_add(0, dst, h[src])
        return F.relu(self.linear((1 + self.eps) * h + agg))


class GINStack(nn.Module):
    def __init__(self, in_dim: int, hidden_dim: int, num_layers: int, learn_eps: bool = True) -> None:
        super().__init__()
        dims = [in_dim] + [hidden_dim] * num_layers
        self.layers = nn.ModuleList(GINLayer(dims[i], dims[i + 1], learn_eps) for i in range(num_layers))

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> list[torch.Tensor]:
        outs = []
        h = x
        for layer in self.layers:
            h = layer(h, src, dst)
            outs.append(h)
        return outs


def sinusoidal_encoding(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=DTYPE)[:, None]
    freq = torch.exp(torch.arange(0, dim, 2, dtype=DTYPE) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=DTYPE)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq)[:, : dim // 2]
    return pe


def window_gather(h: torch.Tensor, index: torch.Tensor, pe: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Gather windows of node rows into a left-padded B x W x d sequence.

    ``index`` is B x W holding row numbers of ``h`` in arrival order with -1
    for padding. Positional encodings are added to valid slots only.
    """
    mask = index >= 0
    padded = torch.cat([h.new_zeros(1, h.shape[1]), h], dim=0)
    seq = padded[index + 1]
    seq = seq + pe[None, :, :] * mask[..., None]
    return seq, mask


def window_and_encode(node_reps: torch.Tensor, window: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Tail window of one graph's node representations (N x d -> W x d, mask)."""
    n, d = node_reps.shape
    k = min(n, window)
    index = torch.full((1, window), -1, dtype=torch.long)
    index[0, window - k:] = torch.arange(n - k, n)
    seq, mask = window_gather(node_reps, index, sinusoidal_encoding(window, d))
    return seq[0], mask[0]


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int) -> None:
        super().__init__()
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.q = nn.Linear(dim, dim, dtype=DTYPE)
        self.k = nn.Linear(dim, dim, dtype=DTYPE)
        self.v = nn.Linear(dim, dim, dtype=DTYPE)
        self.out = nn.Linear(dim, dim, dtype=DTYPE)

    def forward(self, x: torch.Tensor, mask: torch.Tensor, return_weights: bool = False):
        b, w, d = x.shape
        hd = d // self.heads

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(b, w, self.heads, hd).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        logits = q @ k.transpose(-1, -2) / math.sqrt(hd)
        logits = logits.masked_fill(~mask[:, None, None, :], float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(b, w, d)
        out = self.out(out)
        return (out, weights) if return_weights else out


class TransformerEncoderLayer(nn.Module):
    """Post-norm encoder layer: attention and feed-forward, each with residual + LayerNorm."""

    def __init__(self, dim: int, heads: int, ff_dim: int) -> None:
        super().__init__()
        self.attn = MultiHeadSelfAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim, dtype=DTYPE)
        self.ff1 = nn.Linear(dim, ff_dim, dtype=DTYPE)
        self.ff2 = nn.Linear(ff_dim, dim, dtype=DTYPE)
        self.norm2 = nn.LayerNorm(dim, dtype=DTYPE)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.attn(x, mask))
        return self.norm2(x + self.ff2(F.relu(self.ff1(x))))


class TransformerReadout(nn.Module):
    def __init__(self, dim: int, heads: int, ff_dim: int, num_layers: int = 1) -> None:
        super().__init__()
        self.layers = nn.ModuleList(TransformerEncoderLayer(dim, heads, ff_dim) for _ in range(num_layers))

    def forward(self, seq: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """B x W x d -> B x W x d; padded rows of the result are zero."""
        if not bool(mask.any(dim=-1).all()):
            raise ValueError("every sequence needs at least one valid position")
        x = seq
        for layer in self.layers:
            x = layer(x, mask)
        return x * mask[..., None]


def stack_channels(maps: list[torch.Tensor]) -> torch.Tensor:
    """Stack equally shaped W x d (or B x W x d) maps along a new channel axis."""
    shapes = {tuple(m.shape) for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")
    return torch.stack(maps, dim=-3)


def unstack_channels(image: torch.Tensor) -> list[torch.Tensor]:
    return list(image.unbind(dim=-3))


class CrossStitch(nn.Module):
    """Learned 2 x 2 linear mix of two equally shaped activations."""

    def __init__(self, self_weight: float = 0.9, other_weight: float = 0.1) -> None:
        super().__init__()
        self.alpha = nn.Parameter(torch.tensor([[self_weight, other_weight], [other_weight, self_weight]], dtype=DTYPE))

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        al = self.alpha
        return al[0, 0] * a + al[0, 1] * b, al[1, 0] * a + al[1, 1] * b


def l2_normalize(z: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Row-wise unit vectors; zero rows become the first basis vector."""
    norm = z.norm(dim=-1, keepdim=True)
    bad = norm < eps
    if bool(bad.any()):
        logger.warning("degenerate embedding norm in %d row(s); substituting basis vector", int(bad.sum()))
        basis = torch.zeros_like(z)
        basis[..., 0] = 1.0
        return torch.where(bad, basis, z / torch.where(bad, torch.ones_like(norm), norm))
    return z / norm


class ConvBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, pool: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, padding=kernel // 2, dtype=DTYPE)
        self.pool = pool

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.max_pool2d(F.relu(self.conv(x)), self.pool)


class ProjectionHeads(nn.Module):
    """Two convolutional projection heads joined by cross-stitch units.

    Both heads see the same 3-channel map. A cross-stitch unit sits after each
    conv block, so the heads exchange activations twice before their own
    flatten + linear + L2 normalization.
    """

    def __init__(self, in_ch: int, channels: tuple[int, ...], kernel: int, pool: int,
                 height: int, width: int, embedding_dim: int, stitch_init: tuple[float, float]) -> None:
        super().__init__()
        chans = (in_ch, *channels)
        self.campaign = nn.ModuleList(ConvBlock(chans[i], chans[i + 1], kernel, pool) for i in range(len(channels)))
        self.contrastive = nn.ModuleList(ConvBlock(chans[i], chans[i + 1], kernel, pool) for i in range(len(channels)))
        self.stitches = nn.ModuleList(CrossStitch(*stitch_init) for _ in channels)
        for _ in channels:
            height //= pool
            width //= pool
        flat = chans[-1] * height * width
        self.campaign_out = nn.Linear(flat, embedding_dim, dtype=DTYPE)
        self.contrastive_out = nn.Linear(flat, embedding_dim, dtype=DTYPE)

    def forward(self, image: torch.Tensor, stitch: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
        """``stitch=False`` runs the heads as two unconnected networks."""
        a = b = image
        for block_a, block_b, unit in zip(self.campaign, self.contrastive, self.stitches):
            a, b = block_a(a), block_b(b)
            if stitch:
                a, b = unit(a, b)
        za = self.campaign_out(a.flatten(1))
        zb = self.contrastive_out(b.flatten(1))
        return l2_normalize(za), l2_normalize(zb)


class ClassifierHead(nn.Module):
    """Linear + ReLU stack ending in a single logit."""

    def __init__(self, widths: tuple[int, ...]) -> None:
        super().__init__()
        self.linears = nn.ModuleList(nn.Linear(widths[i], widths[i + 1], dtype=DTYPE) for i in range(len(widths) - 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for lin in self.linears[:-1]:
            x = F.relu(lin(x))
        return self.linears[-1](x).squeeze(-1)


class SubCenterArcFaceWeights(nn.Module):
    """Class x sub-center x embedding matrix of unit-norm centers."""

    def __init__(self, num_classes: int, subcenters: int, dim: int) -> None:
        super().__init__()
        w = torch.empty(num_classes, subcenters, dim, dtype=DTYPE)
        nn.init.uniform_(w, -1.0, 1.0)
        self.weight = nn.Parameter(l2_normalize(w))

    @torch.no_grad()
    def renormalize(self) -> None:
        self.weight.copy_(l2_normalize(self.weight))


def sorted_column_sum(h: torch.Tensor) -> torch.Tensor:
    """Sum over rows after sorting each column, so row order cannot change the result."""
    return torch.sort(h, dim=0).values.sum(dim=0)


def sum_readout(layer_reps: list[torch.Tensor]) -> torch.Tensor:
    """Concatenate per-layer node sums of one graph (L x (N x d) -> L*d)."""
    if not layer_reps or layer_reps[0].shape[0] == 0:
        raise ValueError("empty graph")
    return torch.cat([sorted_column_sum(h) for h in layer_reps])
