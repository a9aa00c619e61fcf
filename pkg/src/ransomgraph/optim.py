"""NAdam with decoupled weight decay and Dozat's momentum schedule."""

from __future__ import annotations

from typing import Iterable

import torch
from torch.optim import Optimizer

# (learning rate, weight decay) presets
CONTRASTIVE_LR, CONTRASTIVE_WD = 0.00085, 0.000085
CLASSIFIER_SMALL_LR, CLASSIFIER_SMALL_WD = 0.00045, 0.000025
CLASSIFIER_LARGE_LR, CLASSIFIER_LARGE_WD = 0.0025, 0.000025


def nadam_step(
    param: torch.Tensor,
    grad: torch.Tensor,
    state: dict,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    momentum_decay: float = 0.004,
    decoupled: bool = True,
) -> None:
    """One in-place NAdam update of ``param``.

    ``state`` holds ``step``, ``mu_product``, ``exp_avg`` and ``exp_avg_sq``
    and is created on first use.
    """
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {tuple(grad.shape)} != parameter shape {tuple(param.shape)}")
    beta1, beta2 = betas
    if not state:
        state["step"] = 0
        state["mu_product"] = 1.0
        state["exp_avg"] = torch.zeros_like(param)
        state["exp_avg_sq"] = torch.zeros_like(param)
    state["step"] += 1
    t = state["step"]

    if weight_decay:
        if decoupled:
            param.mul_(1.0 - lr * weight_decay)
        else:
            grad = grad + weight_decay * param

    mu = beta1 * (1.0 - 0.5 * 0.96 ** (t * momentum_decay))
    mu_next = beta1 * (1.0 - 0.5 * 0.96 ** ((t + 1) * momentum_decay))
    mu_product = state["mu_product"] * mu
    state["mu_product"] = mu_product

    m, v = state["exp_avg"], state["exp_avg_sq"]
    m.mul_(beta1).add_(grad, alpha=1.0 - beta1)
    v.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
    denom = (v / (1.0 - beta2 ** t)).sqrt().add_(eps)

    param.addcdiv_(grad, denom, value=-lr * (1.0 - mu) / (1.0 - mu_product))
    param.addcdiv_(m, denom, value=-lr * mu_next / (1.0 - mu_product * mu_next))


class NAdam(Optimizer):
    """NAdam optimizer; parameters without a gradient are skipped entirely."""

    def __init__(self, params: Iterable[torch.Tensor], lr: float = CONTRASTIVE_LR,
                 weight_decay: float = CONTRASTIVE_WD, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, momentum_decay: float = 0.004, decoupled: bool = True) -> None:
        if lr < 0 or weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        defaults = dict(lr=lr, weight_decay=weight_decay, betas=tuple(betas), eps=eps,
                        momentum_decay=momentum_decay, decoupled=decoupled)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                nadam_step(p, p.grad, self.state[p], group["lr"], group["weight_decay"], group["betas"],
                           group["eps"], group["momentum_decay"], group["decoupled"])
        return loss

    def export_state(self, names: dict[int, str], prefix: str) -> tuple[dict, dict[str, torch.Tensor]]:
        """Split optimizer state into JSON scalars and named tensors for checkpointing."""
        scalars, tensors = {}, {}
        for group in self.param_groups:
            for p in group["params"]:
                st = self.state.get(p)
                if not st:
                    continue
                name = names[id(p)]
                scalars[name] = {"step": st["step"], "mu_product": st["mu_product"]}
                tensors[f"{prefix}/{name}/exp_avg"] = st["exp_avg"]
                tensors[f"{prefix}/{name}/exp_avg_sq"] = st["exp_avg_sq"]
        return scalars, tensors

    def import_state(self, names: dict[int, str], prefix: str, scalars: dict, tensors: dict[str, torch.Tensor]) -> None:
        for group in self.param_groups:
            for p in group["params"]:
                name = names[id(p)]
                if name not in scalars:
                    continue
                self.state[p] = {
                    "step": int(scalars[name]["step"]),
                    "mu_product": float(scalars[name]["mu_product"]),
                    "exp_avg": tensors[f"{prefix}/{name}/exp_avg"].clone(),
                    "exp_avg_sq": tensors[f"{prefix}/{name}/exp_avg_sq"].clone(),
                }
