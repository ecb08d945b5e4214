# methods/supervised.py

import copy
import logging
from typing import Optional

import torch.nn as nn

from ..core import DomainSplit, ProvenanceLog, TrainingHistory
from ..models import RunConfig
from ..objectives import cross_entropy
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


def train_supervised(
    model: nn.Module,
    source: DomainSplit,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
    target: Optional[DomainSplit] = None,
) -> TrainResult:
    """
    Plain supervised learning (SL): minimize mean source cross-entropy.

    Args:
        model: initial model (left unmodified; a copy is trained)
        source: source dataset with its split
        cfg: optimization schedule
        log: provenance log for the training reads
        target: optional target split, only used for per-epoch validation TA

    Returns:
        TrainResult with the trained copy and its history
    """
    log = log if log is not None else ProvenanceLog()
    check_device(cfg)
    model = copy.deepcopy(model)
    history = TrainingHistory()
    if cfg.epochs == 0:
        return TrainResult(model, history, log)

    seed_everything(cfg.seed)
    optimizer = optimizer_for(model, cfg)
    stream = BatchStream(source.dataset, source.split.train, cfg.batch_size, cfg.seed, log)

    model.train()
    for _ in epoch_iter(cfg, "sl"):
        meter = EpochMeter()
        for x, y in stream.epoch():
            logits = model(x)
            loss = cross_entropy(logits, y)
            check_finite(loss, "train_supervised")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            meter.update(loss, logits, y)
        meter.close(history, model, source, target)

    logger.info("      SL done: val SA %.1f", history.val_sa[-1])
    return TrainResult(model, history, log)
