"""
Target-specified NTL training and its source-only wrapper.

Both share one loop: per step, one source batch and one (target or
auxiliary) batch go through eq1_composite, optionally plus the weighted
TransNTL consistency defense. Steps per epoch equal the number of source
batches; the second stream cycles.
"""

import copy
import logging
from typing import Optional

import torch
import torch.nn as nn

from ..auxgen import build_auxiliary_domain, make_cuti_style_batch, perturbation_set
from ..core import DomainSplit, PreparedPair, ProvenanceLog, TrainingHistory
from ..models import AugmentationSpec, MethodSpec, RunConfig
from ..objectives import StyleProvider, eq1_composite
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
from .defense import transntl_defense_term

logger = logging.getLogger(__name__)


def _ntl_loop(
    model: nn.Module,
    source: DomainSplit,
    target: DomainSplit,
    spec: MethodSpec,
    cfg: RunConfig,
    log: ProvenanceLog,
    style_provider: Optional[StyleProvider],
    target_val: Optional[DomainSplit],
) -> TrainResult:
    model = copy.deepcopy(model)
    history = TrainingHistory()
    if cfg.epochs == 0:
        return TrainResult(model, history, log)

    objective = resolve_objective(spec.objective, cfg)
    seed_everything(cfg.seed)
    optimizer = optimizer_for(model, cfg)
    source_stream = BatchStream(source.dataset, source.split.train, cfg.batch_size, cfg.seed, log)
    target_stream = BatchStream(target.dataset, target.split.train, cfg.batch_size, cfg.seed + 1, log)
    aux_gen = torch.Generator().manual_seed(cfg.seed + 2)

    use_cuti = spec.name == "cuti_style"
    noise_std = float(spec.param("style_noise_std")) if use_cuti else 0.0
    defense = None
    if spec.defense_consistency_weight > 0:
        defense = perturbation_set("transntl_default", float(spec.param("defense_magnitude")))

    model.train()
    for _ in epoch_iter(cfg, spec.name):
        meter = EpochMeter()
        for xs, ys in source_stream.epoch():
            xt, yt = target_stream.next()
            if use_cuti:
                xt = torch.cat([xt, make_cuti_style_batch(xs, noise_std, aux_gen)])
                yt = torch.cat([yt, ys])
            loss = eq1_composite((xs, ys), (xt, yt), model, objective, style_provider)
            if defense is not None:
                loss = loss + spec.defense_consistency_weight * transntl_defense_term(model, xs, defense, aux_gen)
            check_finite(loss, f"train_{spec.name}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                meter.update(loss, model(xs), ys)
        meter.close(history, model, source, target_val)

    last_ta = history.val_ta[-1]
    logger.info(
        "      %s done: val SA %.1f TA %s",
        spec.name, history.val_sa[-1], "-" if last_ta is None else f"{last_ta:.1f}",
    )
    return TrainResult(model, history, log)


def train_ntl(
    model: nn.Module,
    prepared: PreparedPair,
    spec: MethodSpec,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
    style_provider: Optional[StyleProvider] = None,
) -> TrainResult:
    """
    Target-specified NTL: minimize source CE while pushing the target domain
    away through the configured regularizers.

    spec.name == "cuti_style" additionally appends a randomly restyled copy of
    every source batch to the target batch, so the model also rejects
    style-shifted neighbors of the source domain.
    """
    if spec.name not in ("ntl", "cuti_style"):
        raise ValueError(f"train_ntl cannot run method '{spec.name}'")
    log = log if log is not None else ProvenanceLog()
    check_device(cfg)
    return _ntl_loop(model, prepared.source, prepared.target, spec, cfg, log, style_provider, prepared.target)


def train_source_only(
    model: nn.Module,
    source: DomainSplit,
    spec: MethodSpec,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
) -> TrainResult:
    """
    Source-only NTL: build an auxiliary domain from source data and train
    against it as if it were the target. Target reads are forbidden.
    """
    if spec.name != "source_only_wrapper":
        raise ValueError(f"train_source_only cannot run method '{spec.name}'")
    log = log if log is not None else ProvenanceLog()
    log.forbid(("target", "images"), ("target", "labels"))
    check_device(cfg)

    strategy = str(spec.param("aux_strategy"))
    if strategy == "strong_augment":
        params = AugmentationSpec(
            ops=["gaussian_noise", "gaussian_blur", "solarize", "sharpness", "color_invert", "rotation", "contrast"],
            magnitude=float(spec.param("aux_magnitude")),
            ops_per_sample=int(spec.param("aux_ops_per_sample")),
        )
    else:
        params = {"noise_std": float(spec.param("style_noise_std"))}
    auxiliary = build_auxiliary_domain(source.dataset, strategy, params, seed=cfg.seed, log=log)
    logger.info("      auxiliary domain: %s", auxiliary.shift_desc)

    # index-aligned with the source, so the source split carries over
    aux_split = DomainSplit(auxiliary, source.split)
    return _ntl_loop(model, source, aux_split, spec, cfg, log, None, aux_split)
