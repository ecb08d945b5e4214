"""
Shared plumbing for training loops: seeding, batch streams, optimizers,
divergence checks and per-epoch history.
"""

import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
from tqdm import tqdm

from ..core import DomainSplit, LabeledDataset, ProvenanceLog, TrainingHistory, subset_indices
from ..errors import DivergenceError
from ..models import ObjectiveSpec, RunConfig
from ..network import evaluate_accuracy

logger = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def check_device(cfg: RunConfig) -> None:
    if cfg.device_hint != "cpu":
        logger.warning("device hint '%s' ignored: desk-scale runs execute on cpu", cfg.device_hint)


class BatchStream:
    """
    Shuffled mini-batches over one split of one dataset.

    Every read goes through the provenance log. The stream owns its own
    generator so drawing from it never disturbs other streams.
    """

    def __init__(
        self,
        dataset: LabeledDataset,
        indices: Sequence[int],
        batch_size: int,
        seed: int,
        log: Optional[ProvenanceLog] = None,
        with_labels: bool = True,
    ):
        if len(indices) == 0:
            raise ValueError(f"empty split for dataset '{dataset.name}'")
        self.dataset = dataset
        self.indices = subset_indices(indices)
        self.batch_size = batch_size
        self.log = log
        self.with_labels = with_labels
        self._gen = torch.Generator().manual_seed(seed)
        self._pending: Iterator[Tuple[torch.Tensor, Optional[torch.Tensor]]] = iter(())

    def __len__(self) -> int:
        return (self.indices.numel() + self.batch_size - 1) // self.batch_size

    def _fetch(self, idx: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        x = self.dataset.fetch_images(idx, self.log)
        y = self.dataset.fetch_labels(idx, self.log) if self.with_labels else None
        return x, y

    def epoch(self) -> Iterator[Tuple[torch.Tensor, Optional[torch.Tensor]]]:
        """One pass over the split in a fresh random order."""
        order = self.indices[torch.randperm(self.indices.numel(), generator=self._gen)]
        for start in range(0, order.numel(), self.batch_size):
            yield self._fetch(order[start:start + self.batch_size])

    def next(self) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """Next batch, cycling through epochs indefinitely."""
        try:
            return next(self._pending)
        except StopIteration:
            self._pending = self.epoch()
            return next(self._pending)


def make_optimizer(
    params: Iterable[nn.Parameter],
    name: str,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
) -> torch.optim.Optimizer:
    params = [p for p in params if p.requires_grad]
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer: {name}")


def optimizer_for(model: nn.Module, cfg: RunConfig) -> torch.optim.Optimizer:
    return make_optimizer(model.parameters(), cfg.optimizer_name, cfg.learning_rate, cfg.momentum, cfg.weight_decay)


def check_finite(loss: torch.Tensor, where: str) -> None:
    if not torch.isfinite(loss).all():
        raise DivergenceError(where)


def resolve_objective(objective: ObjectiveSpec, cfg: RunConfig) -> ObjectiveSpec:
    """Apply RunConfig's lambda / clamp overrides to an objective."""
    update = {}
    if cfg.lam is not None:
        update["lam"] = cfg.lam
    if cfg.clamp_bound is not None:
        update["clamp_bound"] = cfg.clamp_bound
    return objective.model_copy(update=update) if update else objective


def epoch_iter(cfg: RunConfig, desc: str) -> Iterable[int]:
    return tqdm(range(cfg.epochs), desc=desc, disable=not cfg.progress, leave=False)


@dataclass
class TrainResult:
    """A trained model, its history and the provenance of every read it made."""

    model: nn.Module
    history: TrainingHistory
    provenance: ProvenanceLog = field(default_factory=ProvenanceLog)


class EpochMeter:
    """Running mean loss and accuracy over one epoch."""

    def __init__(self):
        self.loss_sum = 0.0
        self.correct = 0
        self.seen = 0
        self.batches = 0

    @torch.no_grad()
    def update(self, loss: torch.Tensor, logits: torch.Tensor, labels: torch.Tensor) -> None:
        self.loss_sum += float(loss)
        self.batches += 1
        self.correct += int((logits.argmax(dim=-1) == labels).sum())
        self.seen += labels.numel()

    def close(
        self,
        history: TrainingHistory,
        model: nn.Module,
        source_val: Optional[DomainSplit],
        target_val: Optional[DomainSplit],
    ) -> None:
        history.train_loss.append(self.loss_sum / max(self.batches, 1))
        history.train_acc.append(100.0 * self.correct / max(self.seen, 1))
        sa = evaluate_accuracy(model, source_val.dataset, source_val.split.val) if source_val else float("nan")
        ta = evaluate_accuracy(model, target_val.dataset, target_val.split.val) if target_val else None
        history.val_sa.append(sa)
        history.val_ta.append(ta)
        logger.debug(
            "epoch %d: loss %.4f acc %.1f val SA %.1f TA %s",
            len(history), history.train_loss[-1], history.train_acc[-1], sa,
            "-" if ta is None else f"{ta:.1f}",
        )
