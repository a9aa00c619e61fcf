"""Three-step training.

Step 1 pretrains the encoder contrastively on edge-perturbed views, each graph
being its own class. Step 2 then repeats, per epoch: an ArcFace epoch through
the campaign head, an NT-Xent epoch through the contrastive head (together
step 2A), and a classifier epoch on the frozen encoder's sum readout (step 2B).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import torch

from .augment import PerturbSpec, edge_perturb
from .config import TrainConfig
from .losses import bce_with_logits, nt_xent, subcenter_arcface
from .nn.checkpoint import read_checkpoint, restore_model, write_checkpoint
from .nn.model import AlertGraphModel, ModelConfig, backward, parameter_digest
from .optim import NAdam

logger = logging.getLogger(__name__)

_STAGE_CODES = {"step1": 1, "step2a_arcface": 2, "step2a_graphcl": 3, "step2b": 4}


def balance_one_to_one(graphs: Sequence, seed: int) -> list:
    """Undersample the majority class to the minority count (order preserved)."""
    pos = [i for i, g in enumerate(graphs) if g.label_is_ransomware]
    neg = [i for i, g in enumerate(graphs) if not g.label_is_ransomware]
    if not pos or not neg:
        raise ValueError("both classes must be present to balance")
    rng = np.random.default_rng(seed)
    k = min(len(pos), len(neg))
    keep = set(pos) if len(pos) == k else set(rng.choice(pos, size=k, replace=False).tolist())
    keep |= set(neg) if len(neg) == k else set(rng.choice(neg, size=k, replace=False).tolist())
    return [g for i, g in enumerate(graphs) if i in keep]


def _epoch_rng(seed: int, stage: str, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, _STAGE_CODES[stage], epoch])


def _batches(n: int, batch_size: int, rng: np.random.Generator, min_size: int = 1) -> list[np.ndarray]:
    perm = rng.permutation(n)
    out = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in out if len(b) >= min_size]


def _two_views(graphs: Sequence, idx: np.ndarray, spec: PerturbSpec, rng: np.random.Generator) -> list:
    views = []
    for i in idx:
        views.append(edge_perturb(graphs[i], spec, rng))
        views.append(edge_perturb(graphs[i], spec, rng))
    return views


def _step(loss: torch.Tensor, model: AlertGraphModel, *optimizers: NAdam) -> float:
    model.zero_grad(set_to_none=True)
    backward(loss)
    for opt in optimizers:
        opt.step()
    return float(loss.detach())


def step1_epoch(model: AlertGraphModel, graphs: Sequence, config: TrainConfig, optimizer: NAdam, epoch: int = 0) -> list[float]:
    """Instance-discrimination NT-Xent on the first stack's pooled window embedding."""
    if config.batch_size < 2:
        raise ValueError("batch size must be >= 2")
    rng = _epoch_rng(config.seed, "step1", epoch)
    spec = PerturbSpec(config.step1_remove_fraction, config.step1_add_fraction)
    losses = []
    for idx in _batches(len(graphs), config.batch_size, rng, min_size=2):
        batch = model.batch(_two_views(graphs, idx, spec, rng))
        z = model.pooled_embedding(batch, stack=0)
        losses.append(_step(nt_xent(z, config.temperature), model, optimizer))
    return losses


def step2a_epoch(
    model: AlertGraphModel,
    graphs: Sequence,
    config: TrainConfig,
    optimizers: dict[str, NAdam],
    class_index: dict[str, int],
    epoch: int = 0,
) -> tuple[list[float], list[float]]:
    """One ArcFace epoch through the campaign head, then one NT-Xent epoch
    through the contrastive head. Returns both loss traces."""
    if model.arcface is None:
        raise ValueError("model has no ArcFace centers (num_campaign_classes == 0)")
    if len(class_index) < 2:
        raise ValueError("ArcFace needs at least two campaign classes")
    spec = PerturbSpec(config.step2_remove_fraction, config.step2_add_fraction)
    labels_all = torch.tensor([class_index[g.campaign_class] for g in graphs])

    rng = _epoch_rng(config.seed, "step2a_arcface", epoch)
    arc_losses = []
    for idx in _batches(len(graphs), config.batch_size, rng, min_size=1):
        batch = model.batch(_two_views(graphs, idx, spec, rng))
        z, _ = model.project(batch)
        labels = labels_all[torch.from_numpy(np.repeat(idx, 2))]
        loss = subcenter_arcface(z, labels, model.arcface.weight, config.arcface_scale, config.arcface_margin)
        arc_losses.append(_step(loss, model, optimizers["campaign"], optimizers["arcface"]))
        model.arcface.renormalize()

    rng = _epoch_rng(config.seed, "step2a_graphcl", epoch)
    cl_losses = []
    for idx in _batches(len(graphs), config.batch_size, rng, min_size=2):
        batch = model.batch(_two_views(graphs, idx, spec, rng))
        _, z = model.project(batch)
        cl_losses.append(_step(nt_xent(z, config.temperature), model, optimizers["contrastive"]))
    return arc_losses, cl_losses


@torch.no_grad()
def graph_vectors(model: AlertGraphModel, graphs: Sequence, batch_size: int = 64) -> torch.Tensor:
    out = [model.graph_vectors(model.batch(graphs[i:i + batch_size], full=True))
           for i in range(0, len(graphs), batch_size)]
    return torch.cat(out)


def step2b_epoch(model: AlertGraphModel, graphs: Sequence, config: TrainConfig, optimizer: NAdam,
                 epoch: int = 0, vectors: torch.Tensor | None = None) -> list[float]:
    """Classifier-only BCE epoch; the encoder runs without gradients."""
    if vectors is None:
        vectors = graph_vectors(model, graphs)
    labels = torch.tensor([float(g.label_is_ransomware) for g in graphs], dtype=torch.float64)
    rng = _epoch_rng(config.seed, "step2b", epoch)
    losses = []
    for idx in _batches(len(graphs), config.batch_size, rng):
        t = torch.from_numpy(idx)
        logits = model.classify_vectors(vectors[t])
        losses.append(_step(bce_with_logits(logits, labels[t]), model, optimizer))
    return losses


def class_index_of(graphs: Sequence) -> dict[str, int]:
    return {c: i for i, c in enumerate(sorted({g.campaign_class for g in graphs}))}


@dataclass
class TrainState:
    model: AlertGraphModel
    config: TrainConfig
    class_index: dict[str, int]
    optimizers: dict[str, NAdam] = field(default_factory=dict)
    phase: str = "step1"
    epochs_done: int = 0
    log: dict[str, Any] = field(default_factory=dict)


def _make_step1_optimizers(state: TrainState) -> None:
    c = state.config
    state.optimizers = {"step1": NAdam(state.model.encoder_parameters(), c.contrastive_lr, c.contrastive_weight_decay,
                                       c.betas, c.eps, decoupled=c.decoupled_weight_decay)}


def _make_step2_optimizers(state: TrainState) -> None:
    """Fresh optimizers for step 2: one per projection head, one for the
    ArcFace centers and one for the classifier."""
    m, c = state.model, state.config
    stitches = [] if c.freeze_cross_stitch else m.cross_stitch_parameters()
    enc = m.encoder_parameters() if c.embedding_training and c.step2_encoder_training else []
    kw = dict(betas=c.betas, eps=c.eps, decoupled=c.decoupled_weight_decay)
    state.optimizers = {
        "campaign": NAdam(enc + m.head_parameters("campaign") + stitches, c.contrastive_lr, c.contrastive_weight_decay, **kw),
        "contrastive": NAdam(enc + m.head_parameters("contrastive") + stitches, c.contrastive_lr,
                             c.contrastive_weight_decay, **kw),
        "classifier": NAdam(m.classifier_parameters(), c.effective_classifier_lr,
                            c.effective_classifier_weight_decay, **kw),
    }
    if m.arcface is not None:
        state.optimizers["arcface"] = NAdam(m.arcface_parameters(), c.arcface_lr, c.arcface_weight_decay, **kw)
    if c.freeze_cross_stitch:
        for p in m.cross_stitch_parameters():
            p.requires_grad_(False)


def _new_log(state: TrainState) -> dict[str, Any]:
    return {
        "train_config": state.config.to_dict(),
        "model_config": state.model.config.to_dict(),
        "class_index": state.class_index,
        "step1": [],
        "step2a_arcface": [],
        "step2a_graphcl": [],
        "step2b": [],
        "freeze_digests": [],
    }


def save_train_state(path: str | Path, state: TrainState, meta: dict[str, Any] | None = None) -> None:
    names = {id(p): n for n, p in state.model.named_parameters()}
    tensors = {f"model/{k}": v for k, v in state.model.state_dict().items()}
    opt_scalars = {}
    for key in sorted(state.optimizers):
        scalars, ts = state.optimizers[key].export_state(names, f"optim/{key}")
        opt_scalars[key] = scalars
        tensors.update(ts)
    header = {
        "model_config": state.model.config.to_dict(),
        "meta": dict(meta or {}),
        "train": {
            "config": state.config.to_dict(),
            "class_index": state.class_index,
            "phase": state.phase,
            "epochs_done": state.epochs_done,
            "optimizers": opt_scalars,
            "log": state.log,
        },
    }
    write_checkpoint(path, header, tensors)


def load_train_state(path: str | Path) -> TrainState:
    header, tensors = read_checkpoint(path)
    tr = header["train"]
    model = AlertGraphModel(ModelConfig.from_dict(header["model_config"]))
    restore_model(model, tensors)
    state = TrainState(model, TrainConfig.from_dict(tr["config"]), dict(tr["class_index"]),
                       phase=tr["phase"], epochs_done=int(tr["epochs_done"]), log=tr["log"])
    if state.phase == "step1":
        _make_step1_optimizers(state)
    else:
        _make_step2_optimizers(state)
    names = {id(p): n for n, p in model.named_parameters()}
    for key, opt in state.optimizers.items():
        opt.import_state(names, f"optim/{key}", tr["optimizers"].get(key, {}), tensors)
    return state


def init_train_state(graphs: Sequence, config: TrainConfig, model_config: ModelConfig | None = None) -> TrainState:
    class_index = class_index_of(graphs)
    mc = model_config or ModelConfig()
    mc = replace(mc, num_campaign_classes=len(class_index), arcface_subcenters=config.arcface_subcenters)
    model = AlertGraphModel(mc, seed=config.seed)
    state = TrainState(model, config, class_index)
    state.log = _new_log(state)
    if config.embedding_training and config.step1_epochs > 0:
        _make_step1_optimizers(state)
    else:
        state.phase = "step2"
        _make_step2_optimizers(state)
    return state


def _mean(xs: Sequence[float]) -> float | None:
    return float(np.mean(xs)) if len(xs) else None


def train(
    graphs: Sequence,
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    checkpoint_path: str | Path | None = None,
    resume_from: str | Path | None = None,
    meta: dict[str, Any] | None = None,
    stop_after: int | None = None,
    on_epoch: Callable[[str, int, dict], None] | None = None,
) -> TrainState:
    """Run the full schedule, checkpointing after every epoch.

    ``stop_after`` ends the run after that many epochs in this call (step 1
    and step 2 epochs both count), which together with ``resume_from`` lets a
    run be split across invocations.
    """
    if resume_from is not None:
        state = load_train_state(resume_from)
    else:
        state = init_train_state(graphs, config, model_config)
    config = state.config
    model = state.model
    ran = 0

    def checkpoint() -> None:
        if checkpoint_path is not None:
            save_train_state(checkpoint_path, state, meta)

    if state.phase == "step1":
        while state.epochs_done < config.step1_epochs:
            if stop_after is not None and ran >= stop_after:
                return state
            e = state.epochs_done
            losses = step1_epoch(model, graphs, config, state.optimizers["step1"], e)
            state.log["step1"].append({"epoch": e, "losses": losses, "mean": _mean(losses)})
            state.epochs_done += 1
            ran += 1
            logger.info("step1 epoch %d: nt-xent %.4f", e, _mean(losses) or float("nan"))
            if on_epoch:
                on_epoch("step1", e, state.log)
            checkpoint()
        state.phase = "step2"
        state.epochs_done = 0
        _make_step2_optimizers(state)

    frozen = model.non_classifier_parameters()
    while state.epochs_done < config.step2_epochs:
        if stop_after is not None and ran >= stop_after:
            return state
        e = state.epochs_done
        if config.embedding_training:
            arc, cl = step2a_epoch(model, graphs, config, state.optimizers, state.class_index, e)
            state.log["step2a_arcface"].append({"epoch": e, "losses": arc, "mean": _mean(arc)})
            state.log["step2a_graphcl"].append({"epoch": e, "losses": cl, "mean": _mean(cl)})
        before = parameter_digest(frozen)
        clf = step2b_epoch(model, graphs, config, state.optimizers["classifier"], e)
        after = parameter_digest(frozen)
        if before != after:
            raise RuntimeError("non-classifier parameters changed during a classifier epoch")
        state.log["step2b"].append({"epoch": e, "losses": clf, "mean": _mean(clf)})
        state.log["freeze_digests"].append({"epoch": e, "before": before, "after": after})
        state.epochs_done += 1
        ran += 1
        logger.info("step2 epoch %d: arcface %s graphcl %s bce %.4f", e,
                    state.log["step2a_arcface"][-1]["mean"] if config.embedding_training else "-",
                    state.log["step2a_graphcl"][-1]["mean"] if config.embedding_training else "-",
                    _mean(clf) or float("nan"))
        if on_epoch:
            on_epoch("step2", e, state.log)
        checkpoint()
    state.phase = "done"
    checkpoint()
    return state
