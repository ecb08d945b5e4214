# attacks/battery.py

import logging
from typing import List, NamedTuple, Sequence

import torch.nn as nn

from ..auxgen import perturbation_set
from ..core import Metrics, PreparedPair, ProvenanceLog
from ..models import AttackSpec, RunConfig
from ..network import evaluate_metrics, parameter_checksum
from .finetune import finetune_attack, transntl_attack
from .shot import shot_attack
from .subset import attack_run_config, attack_subset

logger = logging.getLogger(__name__)


class BatteryRow(NamedTuple):
    spec: AttackSpec
    pre: Metrics
    post: Metrics
    provenance: dict


def run_attack(
    model: nn.Module,
    prepared: PreparedPair,
    spec: AttackSpec,
    pretrain: RunConfig,
    log: ProvenanceLog,
) -> nn.Module:
    """Run one attack on a fresh copy of the model; source_ft draws from the source split, the rest from the target."""
    domain = prepared.source if spec.family == "source_ft" else prepared.target
    indices = attack_subset(domain.split.train, spec.budget_fraction, spec.seed)
    cfg = attack_run_config(spec, pretrain)
    if spec.strategy == "transntl":
        pset = perturbation_set("transntl_default", spec.perturbation_magnitude)
        return transntl_attack(model, domain.dataset, indices, pset, cfg, log)
    if spec.strategy == "shot":
        return shot_attack(model, domain.dataset, indices, cfg, log)
    return finetune_attack(model, domain.dataset, indices, spec.strategy, cfg, log)


def run_threat_battery(
    model: nn.Module,
    prepared: PreparedPair,
    specs: Sequence[AttackSpec],
    pretrain: RunConfig,
) -> List[BatteryRow]:
    """
    Evaluate the model once, then run every attack from a fresh copy.

    Returns:
        One row per spec with test-split metrics before and after the attack

    Raises:
        RuntimeError: if an attack altered the input model
    """
    if not specs:
        return []
    checksum = parameter_checksum(model)
    pre = evaluate_metrics(model, prepared, "test")
    rows: List[BatteryRow] = []
    for i, spec in enumerate(specs, start=1):
        log = ProvenanceLog()
        attacked = run_attack(model, prepared, spec, pretrain, log)
        post = evaluate_metrics(attacked, prepared, "test")
        if parameter_checksum(model) != checksum:
            raise RuntimeError(f"attack {spec.label} modified its input model")
        logger.info(
            "      [%d/%d] %s: SA %.1f -> %.1f, TA %.1f -> %.1f",
            i, len(specs), spec.label, pre.SA, post.SA, pre.TA, post.TA,
        )
        rows.append(BatteryRow(spec, pre, post, log.as_dict()))
    return rows
