"""Contrastive, metric-learning and classification losses."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F


def nt_xent_logits(z: torch.Tensor, temperature: float) -> torch.Tensor:
    """Cosine-similarity logits / temperature with the diagonal masked out."""
    z = F.normalize(z, dim=1)
    logits = (z @ z.T) / temperature
    eye = torch.eye(len(z), dtype=torch.bool)
    return logits.masked_fill(eye, float("-inf"))


def nt_xent(z: torch.Tensor, temperature: float = 0.5) -> torch.Tensor:
    """NT-Xent over 2B embeddings where rows 2i and 2i+1 are views of item i."""
    n = z.shape[0]
    if n % 2:
        raise ValueError("expected an even number of rows (two views per item)")
    if n < 4:
        raise ValueError("need at least 2 items per batch so that negatives exist")
    logits = nt_xent_logits(z, temperature)
    positives = torch.arange(n) ^ 1
    return F.cross_entropy(logits, positives)


def subcenter_arcface_logits(
    z: torch.Tensor,
    labels: torch.Tensor,
    centers: torch.Tensor,
    scale: float = 30.0,
    margin: float = 0.3,
) -> torch.Tensor:
    """Scaled logits with an additive angular margin on the target class.

    ``centers`` is C x K x D; each class logit is the best of its K sub-center
    cosines.
    """
    num_classes = centers.shape[0]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    zn = F.normalize(z, dim=1)
    wn = F.normalize(centers, dim=2)
    cos = torch.einsum("bd,ckd->bck", zn, wn).amax(dim=2).clamp(-1.0, 1.0)
    target = cos.gather(1, labels[:, None])
    if margin:
        sin = torch.sqrt((1.0 - target * target).clamp_min(1e-12))
        with_margin = target * math.cos(margin) - sin * math.sin(margin)
        # keep the logit monotone in the angle once theta + m passes pi
        fallback = target - math.sin(math.pi - margin) * margin
        with_margin = torch.where(target > math.cos(math.pi - margin), with_margin, fallback)
    else:
        with_margin = target
    onehot = F.one_hot(labels, num_classes).to(torch.bool)
    logits = torch.where(onehot, with_margin.expand_as(cos), cos)
    return scale * logits


def subcenter_arcface(
    z: torch.Tensor,
    labels: torch.Tensor,
    centers: torch.Tensor,
    scale: float = 30.0,
    margin: float = 0.3,
) -> torch.Tensor:
    return F.cross_entropy(subcenter_arcface_logits(z, labels, centers, scale, margin), labels)


def bce(probability: torch.Tensor, label: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Binary cross-entropy on probabilities, clamped away from 0 and 1."""
    p = probability.clamp(eps, 1.0 - eps)
    y = label.to(p.dtype)
    return -(y * torch.log(p) + (1 - y) * torch.log1p(-p)).mean()


def bce_with_logits(logits: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, label.to(logits.dtype))
