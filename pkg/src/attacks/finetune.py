"""
Fine-tuning attacks (SourceFT / TargetFT) and the TransNTL repair attack.
"""

import copy
import logging
from typing import Optional, Sequence

import torch
import torch.nn as nn

from ..core import LabeledDataset, ProvenanceLog
from ..methods.common import BatchStream, check_finite, epoch_iter, make_optimizer, seed_everything
from ..methods.defense import Perturbation, perturb
from ..models import FINETUNE_STRATEGIES, RunConfig
from ..objectives import cross_entropy, kl_divergence

logger = logging.getLogger(__name__)


def finetune_attack(
    model: nn.Module,
    dataset: LabeledDataset,
    indices: Sequence[int],
    strategy: str,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
) -> nn.Module:
    """
    Fine-tune a copy of the model on a labeled subset.

    initFC_* re-initializes omega first; *_FC trains omega only with phi
    frozen; *_all trains every parameter.
    """
    if strategy not in FINETUNE_STRATEGIES:
        raise ValueError(f"'{strategy}' is not a fine-tuning strategy")
    if len(indices) == 0:
        raise ValueError("empty attack data")

    attacked = copy.deepcopy(model)
    seed_everything(cfg.seed)
    if strategy.startswith("initFC"):
        attacked.reset_omega()
    head_only = strategy.endswith("_FC")
    if head_only:
        for p in attacked.phi_parameters():
            p.requires_grad_(False)

    if cfg.epochs > 0:
        params = attacked.omega_parameters() if head_only else attacked.parameters()
        optimizer = make_optimizer(params, cfg.optimizer_name, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
        stream = BatchStream(dataset, indices, cfg.batch_size, cfg.seed, log)
        attacked.train()
        for _ in epoch_iter(cfg, strategy):
            for x, y in stream.epoch():
                loss = cross_entropy(attacked(x), y)
                check_finite(loss, f"finetune_attack[{strategy}]")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

    for p in attacked.parameters():
        p.requires_grad_(True)
    return attacked


def transntl_attack(
    model: nn.Module,
    dataset: LabeledDataset,
    indices: Sequence[int],
    pset: Sequence[Perturbation],
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
) -> nn.Module:
    """
    Impairment-repair self-distillation on source data.

    Minimizes CE(f(x), y) + sum_p KL(f(p(x)) || anchor(x)), where the
    anchor is a frozen copy of the input model on clean x. Reading any
    target example aborts the attack.
    """
    if len(pset) == 0:
        raise ValueError("perturbation set must be nonempty")
    if len(indices) == 0:
        raise ValueError("empty attack data")
    log = log if log is not None else ProvenanceLog()
    log.forbid(("target", "images"), ("target", "labels"))

    attacked = copy.deepcopy(model)
    anchor = copy.deepcopy(model).eval()
    for p in anchor.parameters():
        p.requires_grad_(False)
    if cfg.epochs == 0:
        return attacked

    seed_everything(cfg.seed)
    optimizer = make_optimizer(attacked.parameters(), cfg.optimizer_name, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    stream = BatchStream(dataset, indices, cfg.batch_size, cfg.seed, log)
    noise_gen = torch.Generator().manual_seed(cfg.seed + 2)

    attacked.train()
    for _ in epoch_iter(cfg, "transntl"):
        for x, y in stream.epoch():
            with torch.no_grad():
                reference = torch.softmax(anchor(x), dim=-1)
            loss = cross_entropy(attacked(x), y)
            for p in pset:
                probs = torch.softmax(attacked(perturb(p, x, noise_gen)), dim=-1)
                loss = loss + kl_divergence(probs, reference).mean()
            check_finite(loss, "transntl_attack")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    return attacked
