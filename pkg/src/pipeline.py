"""
End-to-end experiment runner for ntlbench.

This ties together all components:
    1. Data (load or synthesize → domain pair → 8:1:1 splits)
    2. Model (ArchSpec → ModelBundle)
    3. Train (MethodSpec → trained model + history)
    4. Evaluate (test and validation SA / TA / OA)
    5. Attack (threat battery) and register (checkpoint + RunRecord)

Usage:
    from src.pipeline import run_experiment

    record = run_experiment(ExperimentConfig.from_yaml("src/experiment/examples/glyphs_ntl.yaml"))
"""

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import List, Optional, Sequence

from .attacks import run_threat_battery
from .checkpoint import load_checkpoint, save_checkpoint
from .core import PreparedPair, ProvenanceLog
from .data import build_aa_pair, build_ov_pair, load_or_synthesize, make_domain_pair, split_811
from .experiment import AttackResult, DatasetBlock, ExperimentConfig, RunRecord
from .methods import train_method
from .models import AttackSpec
from .network import build_model, evaluate_metrics
from .registry import RunRegistry

logger = logging.getLogger(__name__)


def prepare_data(block: DatasetBlock) -> PreparedPair:
    """Build the domain pair described by a dataset block, with one split shared by both domains."""
    source = block.path if block.base == "digits_idx" else block.seed
    base = load_or_synthesize(block.base, source, num_samples=block.num_samples, image_size=block.image_size)
    if block.trigger is not None:
        build = build_ov_pair if block.application == "ov" else build_aa_pair
        pair = build(base, block.trigger)
    else:
        pair = make_domain_pair(base, block.shifts, seed=block.split_seed)
    split = split_811(base, block.split_seed)
    return PreparedPair(pair, split, split)


def run_experiment(
    config: ExperimentConfig,
    registry: Optional[RunRegistry] = None,
) -> RunRecord:
    """
    Pre-train one model and, if the config lists attacks, run its threat battery.

    Args:
        config: full experiment config
        registry: where to store the record and checkpoint (None keeps the run in memory)

    Returns:
        The RunRecord; if the run_id is already registered, the stored record
    """
    run_id = config.run_id()
    if registry is not None and registry.contains(run_id):
        logger.info("run %s already registered, skipping training", run_id)
        return registry.load(run_id)
    started = time.perf_counter()
    steps = 5

    logger.info("[1/%d] Preparing data: %s", steps, config.dataset.describe())
    prepared = prepare_data(config.dataset)
    logger.info(
        "      %d examples per domain (train %d / val %d / test %d)",
        len(prepared.pair.source), len(prepared.source_split.train),
        len(prepared.source_split.val), len(prepared.source_split.test),
    )

    logger.info("[2/%d] Building model (conv %s, pooling %s)", steps, config.model.conv_channels, config.model.pooling)
    model = build_model(config.model, seed=config.run.seed)

    logger.info("[3/%d] Training method '%s' for %d epochs", steps, config.method.name, config.run.epochs)
    log = ProvenanceLog()
    result = train_method(model, prepared, config.method, config.run, log)
    logger.info("      reads: %s", log.as_dict())

    logger.info("[4/%d] Evaluating", steps)
    pretrain = evaluate_metrics(result.model, prepared, "test")
    val = evaluate_metrics(result.model, prepared, "val")
    logger.info("      test SA %.1f  TA %.1f  OA %.1f", pretrain.SA, pretrain.TA, pretrain.OA)

    attacks: List[AttackResult] = []
    if config.attacks:
        logger.info("[5/%d] Running %d attacks", steps, len(config.attacks))
        rows = run_threat_battery(result.model, prepared, config.attacks, config.run)
        attacks = [AttackResult(spec=r.spec, pre=r.pre, post=r.post, provenance=r.provenance) for r in rows]
    else:
        logger.info("[5/%d] No attacks configured", steps)

    artifacts = {}
    if registry is not None:
        run_dir = registry.run_dir(run_id)
        artifacts["checkpoint"] = str(save_checkpoint(result.model, run_dir / "model.ckpt"))
        history_path = run_dir / "history.json"
        history_path.write_text(json.dumps(result.history.as_dict(), indent=2))
        artifacts["history"] = str(history_path)

    record = RunRecord(
        run_id=run_id,
        config=config,
        dataset_desc=config.dataset.describe(),
        pretrain=pretrain,
        val=val,
        attacks=attacks,
        wall_time_s=time.perf_counter() - started,
        artifacts=artifacts,
    )
    if registry is not None:
        registry.append(record)
        logger.info("      registered run %s", run_id)
    return record


def attack_run_id(parent_id: str, specs: Sequence[AttackSpec]) -> str:
    payload = json.dumps([parent_id, [s.model_dump(mode="json") for s in specs]], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def run_attacks(
    parent_id: str,
    specs: Sequence[AttackSpec],
    registry: RunRegistry,
) -> RunRecord:
    """
    Attack a stored checkpoint and register the battery as a new child record.

    Raises:
        RunNotFoundError: unknown parent_id
    """
    parent = registry.load(parent_id)
    run_id = attack_run_id(parent_id, specs)
    if registry.contains(run_id):
        logger.info("attack run %s already registered", run_id)
        return registry.load(run_id)
    started = time.perf_counter()

    logger.info("[1/3] Loading run %s (%s)", parent_id, parent.method)
    prepared = prepare_data(parent.config.dataset)
    model = load_checkpoint(parent.artifacts["checkpoint"], expected_arch=parent.config.model)

    logger.info("[2/3] Running %d attacks", len(specs))
    rows = run_threat_battery(model, prepared, specs, parent.config.run)

    logger.info("[3/3] Registering attack run %s", run_id)
    record = RunRecord(
        run_id=run_id,
        parent_id=parent_id,
        config=parent.config,
        dataset_desc=parent.dataset_desc,
        pretrain=parent.pretrain,
        val=parent.val,
        attacks=[AttackResult(spec=r.spec, pre=r.pre, post=r.post, provenance=r.provenance) for r in rows],
        wall_time_s=time.perf_counter() - started,
        artifacts={"checkpoint": parent.artifacts["checkpoint"]},
    )
    registry.append(record)
    return record


def sweep(config: ExperimentConfig, registry: RunRegistry) -> str:
    """
    Train the five sweep variants and return the run_id with the best validation OA.

    Ties go to the first-listed value.
    """
    variants = config.sweep_variants()
    best_id, best_oa = None, float("-inf")
    for i, variant in enumerate(variants, start=1):
        logger.info("sweep %d/%d: %s", i, len(variants), variant.name)
        record = run_experiment(variant, registry)
        logger.info("      val OA %.2f", record.val.OA)
        if record.val.OA > best_oa:
            best_id, best_oa = record.run_id, record.val.OA
    logger.info("sweep winner: %s (val OA %.2f)", best_id, best_oa)
    return best_id


def quick_run(preset: str = "minimal", registry_root: Optional[str | Path] = None) -> RunRecord:
    """Run a built-in preset with its own output_dir (or registry_root) as the registry."""
    config = ExperimentConfig.from_yaml(ExperimentConfig.resolve(preset))
    registry = RunRegistry(registry_root) if registry_root is not None else RunRegistry.from_env(config.output_dir)
    return run_experiment(config, registry)
