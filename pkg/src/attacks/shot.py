"""
Source-free domain adaptation attack (SHOT).

omega is frozen; phi is adapted on unlabeled target images by information
maximization plus cross-entropy to self-supervised pseudo-labels.
"""

import copy
import logging
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.metrics.pairwise import cosine_distances

from ..core import LabeledDataset, ProvenanceLog, subset_indices
from ..methods.common import check_finite, epoch_iter, make_optimizer, seed_everything
from ..models import RunConfig
from ..objectives import cross_entropy

logger = logging.getLogger(__name__)

PSEUDO_LABEL_WEIGHT = 0.3
ENTROPY_EPS = 1e-5


def information_maximization_loss(logits: torch.Tensor) -> torch.Tensor:
    """Mean per-sample entropy minus the entropy of the mean prediction."""
    probs = torch.softmax(logits, dim=-1)
    entropy = -(probs * torch.log(probs + ENTROPY_EPS)).sum(dim=-1).mean()
    mean_probs = probs.mean(dim=0)
    diversity = -(mean_probs * torch.log(mean_probs + ENTROPY_EPS)).sum()
    return entropy - diversity


def shot_pseudo_labels(features: torch.Tensor, probs: torch.Tensor) -> torch.Tensor:
    """
    Nearest-centroid pseudo-labels.

    Features get a constant 1 appended and are L2-normalized; class
    centroids are the soft-prediction-weighted means of those features;
    each sample takes the centroid with the smallest cosine distance.
    """
    feats = torch.cat([features, torch.ones(features.shape[0], 1, dtype=features.dtype)], dim=1)
    feats = F.normalize(feats, p=2, dim=1).double().numpy()
    weights = probs.double().numpy()
    centroids = weights.T @ feats / (weights.sum(axis=0)[:, None] + 1e-8)
    dist = cosine_distances(feats, centroids)
    return torch.as_tensor(dist.argmin(axis=1), dtype=torch.int64)


def shot_attack(
    model: nn.Module,
    dataset: LabeledDataset,
    indices: Sequence[int],
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
) -> nn.Module:
    """
    Adapt phi on unlabeled images; pseudo-labels are recomputed every epoch.

    Any read of target labels aborts the attack.
    """
    if len(indices) < dataset.num_classes:
        raise ValueError("insufficient adaptation data")
    log = log if log is not None else ProvenanceLog()
    log.forbid(("target", "labels"))

    attacked = copy.deepcopy(model)
    for p in attacked.omega_parameters():
        p.requires_grad_(False)
    if cfg.epochs == 0:
        for p in attacked.parameters():
            p.requires_grad_(True)
        return attacked

    seed_everything(cfg.seed)
    optimizer = make_optimizer(attacked.phi_parameters(), cfg.optimizer_name, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    idx = subset_indices(indices)
    images = dataset.fetch_images(idx, log)
    gen = torch.Generator().manual_seed(cfg.seed)

    for epoch in epoch_iter(cfg, "shot"):
        attacked.eval()
        with torch.no_grad():
            feats = attacked.features(images)
            pseudo = shot_pseudo_labels(feats, torch.softmax(attacked.omega(feats), dim=-1))
        logger.debug("shot epoch %d: pseudo-label histogram %s", epoch, torch.bincount(pseudo, minlength=dataset.num_classes).tolist())

        attacked.train()
        order = torch.randperm(idx.numel(), generator=gen)
        for start in range(0, order.numel(), cfg.batch_size):
            pos = order[start:start + cfg.batch_size]
            logits = attacked(images[pos])
            loss = information_maximization_loss(logits) + PSEUDO_LABEL_WEIGHT * cross_entropy(logits, pseudo[pos])
            check_finite(loss, "shot_attack")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    for p in attacked.parameters():
        p.requires_grad_(True)
    return attacked
