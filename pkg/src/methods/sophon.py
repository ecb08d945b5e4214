"""
Fine-tuning-aware NTL (SOPHON).

Training alternates two phases:

  * non-fine-tunability: starting from the current parameters, simulate K
    steps of target fine-tuning on detached copies (torch.func.functional_call)
    and accumulate a target risk at every point of the trajectory. Only the
    resulting meta-gradient is applied to the base parameters.
  * maintenance: one epoch of plain source cross-entropy.

The accumulated risk is a loss whose minimum is a useless target model:
"inverse_ce" pushes predictions onto the wrong classes, "uniform_kl" pushes
them towards uniform.
"""

import copy
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
from torch.func import functional_call

from ..core import PreparedPair, ProvenanceLog, TrainingHistory
from ..models import MethodSpec, RunConfig
from ..objectives import cross_entropy, inverse_label_distribution, soft_cross_entropy, uniform_kl
from .common import (
    BatchStream,
    EpochMeter,
    TrainResult,
    check_device,
    check_finite,
    epoch_iter,
    optimizer_for,
    seed_everything,
)

logger = logging.getLogger(__name__)

Batch = Tuple[torch.Tensor, torch.Tensor]


def target_risk(logits: torch.Tensor, labels: torch.Tensor, risk_loss: str) -> torch.Tensor:
    if risk_loss == "inverse_ce":
        target = inverse_label_distribution(labels, logits.shape[-1]).to(logits)
        return soft_cross_entropy(logits, target)
    if risk_loss == "uniform_kl":
        return uniform_kl(torch.softmax(logits, dim=-1)).mean()
    raise ValueError(f"unknown sophon risk loss: {risk_loss}")


def _grads(loss: torch.Tensor, params: Dict[str, torch.Tensor], **kwargs) -> List[torch.Tensor]:
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True, **kwargs)
    return [torch.zeros_like(p) if g is None else g for g, p in zip(grads, params.values())]


def sophon_meta_gradient(
    model: nn.Module,
    target_batches: Sequence[Batch],
    inner_lr: float,
    risk_loss: str = "inverse_ce",
    second_order: bool = False,
) -> Tuple[List[torch.Tensor], float]:
    """
    Meta-gradient of the mean target risk along a simulated fine-tuning run.

    With K + 1 batches, K cross-entropy descent steps are simulated and the
    risk is evaluated at all K + 1 points. First-order mode treats every
    simulated step as a constant (the gradient at each point is taken with
    respect to that point); second-order mode differentiates through the
    unrolled updates. The model's own parameters are never modified.

    Returns:
        (one gradient per model.parameters() entry, mean risk value)
    """
    if len(target_batches) < 2:
        raise ValueError("sophon requires inner steps")
    base = {n: p.detach().clone().requires_grad_(True) for n, p in model.named_parameters()}
    count = len(target_batches)

    if second_order:
        theta = dict(base)
        total = None
        for k, (x, y) in enumerate(target_batches):
            logits = functional_call(model, theta, (x,))
            risk = target_risk(logits, y, risk_loss)
            total = risk if total is None else total + risk
            if k < count - 1:
                step = _grads(cross_entropy(logits, y), theta, create_graph=True)
                theta = {n: t - inner_lr * g for (n, t), g in zip(theta.items(), step)}
        meta = _grads(total / count, base)
        return meta, float(total.detach()) / count

    theta = base
    meta = [torch.zeros_like(p) for p in base.values()]
    risk_sum = 0.0
    for k, (x, y) in enumerate(target_batches):
        logits = functional_call(model, theta, (x,))
        risk = target_risk(logits, y, risk_loss)
        risk_sum += float(risk.detach())
        for acc, g in zip(meta, _grads(risk, theta, retain_graph=True)):
            acc.add_(g / count)
        if k < count - 1:
            step = _grads(cross_entropy(logits, y), theta)
            theta = {
                n: (t - inner_lr * g).detach().requires_grad_(True)
                for (n, t), g in zip(theta.items(), step)
            }
    return meta, risk_sum / count


def nonfinetunability_block(
    model: nn.Module,
    target_stream: BatchStream,
    spec: MethodSpec,
    meta_optimizer: torch.optim.Optimizer,
    iterations: int,
) -> float:
    """
    Run `iterations` meta-updates in place on `model`; returns the last mean risk.

    The simulated trajectories live on detached copies, so the only change
    to the model is what meta_optimizer applies.
    """
    k = int(spec.param("inner_steps"))
    inner_lr = float(spec.param("inner_lr"))
    risk_loss = str(spec.param("risk_loss"))
    second_order = bool(spec.param("second_order"))
    risk = float("nan")
    for _ in range(iterations):
        batches = [target_stream.next() for _ in range(k + 1)]
        meta, risk = sophon_meta_gradient(model, batches, inner_lr, risk_loss, second_order)
        check_finite(torch.tensor(risk), "train_sophon")
        meta_optimizer.zero_grad()
        for p, g in zip(model.parameters(), meta):
            p.grad = g
        meta_optimizer.step()
    return risk


def train_sophon(
    model: nn.Module,
    prepared: PreparedPair,
    spec: MethodSpec,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
) -> TrainResult:
    """
    Alternate blocks_per_epoch non-fine-tunability blocks with one maintenance
    epoch, cfg.epochs times.
    """
    if spec.name != "sophon":
        raise ValueError(f"train_sophon cannot run method '{spec.name}'")
    if int(spec.param("inner_steps")) < 1:
        raise ValueError("sophon requires inner steps")
    if float(spec.param("inner_lr")) <= 0:
        raise ValueError("sophon inner learning rate must be positive")
    log = log if log is not None else ProvenanceLog()
    check_device(cfg)

    model = copy.deepcopy(model)
    history = TrainingHistory()
    if cfg.epochs == 0:
        return TrainResult(model, history, log)

    seed_everything(cfg.seed)
    optimizer = optimizer_for(model, cfg)
    meta_optimizer = torch.optim.Adam(model.parameters(), lr=float(spec.param("meta_lr")))
    source_stream = BatchStream(prepared.source.dataset, prepared.source.split.train, cfg.batch_size, cfg.seed, log)
    target_stream = BatchStream(prepared.target.dataset, prepared.target.split.train, cfg.batch_size, cfg.seed + 1, log)
    iterations = int(spec.param("meta_iterations"))

    model.train()
    for _ in epoch_iter(cfg, "sophon"):
        for _ in range(int(spec.param("blocks_per_epoch"))):
            risk = nonfinetunability_block(model, target_stream, spec, meta_optimizer, iterations)
            logger.debug("sophon block: target risk %.4f", risk)
        meter = EpochMeter()
        for x, y in source_stream.epoch():
            logits = model(x)
            loss = cross_entropy(logits, y)
            check_finite(loss, "train_sophon")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            meter.update(loss, logits, y)
        meter.close(history, model, prepared.source, prepared.target)

    logger.info("      SOPHON done: val SA %.1f TA %.1f", history.val_sa[-1], history.val_ta[-1])
    return TrainResult(model, history, log)
