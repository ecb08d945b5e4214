"""
Source-only NTL by worst-case risk over an uncertainty set (DSO).

The uncertainty set around every source batch is realized by sign-gradient
ascent inside an L-infinity ball of radius eps; the model is then trained
to map those perturbed neighbors onto the error label (y + 1) mod C while
keeping clean-source accuracy.
"""

import copy
import logging
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core import DomainSplit, ProvenanceLog, TrainingHistory
from ..models import MethodSpec, RunConfig
from ..objectives import cross_entropy, error_label, kl_divergence
from .common import (
    BatchStream,
    EpochMeter,
    TrainResult,
    check_device,
    check_finite,
    epoch_iter,
    optimizer_for,
    resolve_objective,
    seed_everything,
)

logger = logging.getLogger(__name__)


def error_label_kl(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    # KL(onehot(err) || f): the reverse direction is infinite on a one-hot target
    num_classes = logits.shape[-1]
    target = F.one_hot(error_label(labels, num_classes), num_classes).to(logits.dtype)
    return kl_divergence(target, torch.softmax(logits, dim=-1)).mean()


def dso_perturb(
    model: nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    radius: float,
    steps: int,
    generator: Optional[torch.Generator] = None,
    random_start: bool = True,
) -> torch.Tensor:
    """
    Craft x + delta with ||delta||_inf <= radius maximizing the error-label KL.

    Each of the `steps` ascent steps moves delta by radius / steps along the
    gradient sign and projects back onto the ball; x + delta is clipped to
    [0, 1], which never enlarges |delta|.
    """
    if radius < 0:
        raise ValueError("perturbation radius must be nonnegative")
    if radius == 0:
        return x.clone()

    if random_start:
        delta = (torch.rand(x.shape, generator=generator, dtype=x.dtype) * 2.0 - 1.0) * radius
    else:
        delta = torch.zeros_like(x)
    step = radius / max(steps, 1)
    for _ in range(steps):
        delta.requires_grad_(True)
        loss = error_label_kl(model((x + delta).clamp(0.0, 1.0)), y)
        (grad,) = torch.autograd.grad(loss, delta)
        delta = (delta.detach() + step * grad.sign()).clamp(-radius, radius)
    return (x + delta.detach()).clamp(0.0, 1.0)


def train_dso(
    model: nn.Module,
    source: DomainSplit,
    spec: MethodSpec,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
) -> TrainResult:
    """
    Train with CE on clean source plus lambda * error-label KL on the
    uncertainty-set batch. Never reads target data.
    """
    if spec.name != "dso":
        raise ValueError(f"train_dso cannot run method '{spec.name}'")
    log = log if log is not None else ProvenanceLog()
    log.forbid(("target", "images"), ("target", "labels"))
    check_device(cfg)

    model = copy.deepcopy(model)
    history = TrainingHistory()
    if cfg.epochs == 0:
        return TrainResult(model, history, log)

    radius = float(spec.param("perturb_radius"))
    steps = int(spec.param("ascent_steps"))
    random_start = bool(spec.param("random_start"))
    lam = resolve_objective(spec.objective, cfg).lam

    seed_everything(cfg.seed)
    optimizer = optimizer_for(model, cfg)
    stream = BatchStream(source.dataset, source.split.train, cfg.batch_size, cfg.seed, log)
    noise_gen = torch.Generator().manual_seed(cfg.seed + 2)

    model.train()
    for _ in epoch_iter(cfg, "dso"):
        meter = EpochMeter()
        for x, y in stream.epoch():
            x_adv = dso_perturb(model, x, y, radius, steps, noise_gen, random_start)
            logits = model(x)
            loss = cross_entropy(logits, y) + lam * error_label_kl(model(x_adv), y)
            check_finite(loss, "train_dso")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            meter.update(loss, logits, y)
        meter.close(history, model, source, None)

    logger.info("      DSO done: val SA %.1f", history.val_sa[-1])
    return TrainResult(model, history, log)
