#!/usr/bin/env python3
"""
Tests for the threat battery: subset sampling, fine-tuning, TransNTL, SHOT.
"""

import math

import pytest
import torch

from conftest import fast_run, main_for, tiny_model, tiny_prepared
from src.attacks import (
    attack_run_config,
    attack_subset,
    finetune_attack,
    information_maximization_loss,
    run_threat_battery,
    shot_attack,
    shot_pseudo_labels,
    transntl_attack,
)
from src.auxgen import perturbation_set
from src.core import ProvenanceLog
from src.errors import ProvenanceViolation
from src.models import AttackSpec
from src.network import parameter_checksum


def _state(module):
    return {k: v.clone() for k, v in module.state_dict().items()}


def _same(a, b):
    return all(torch.equal(a[k], b[k]) for k in a)


def test_attack_subset_sizes():
    pool = list(range(100, 300))
    picked = attack_subset(pool, 0.1, seed=0)
    assert len(picked) == 20
    assert picked == sorted(picked)
    assert set(picked) <= set(pool)
    assert attack_subset(pool, 0.1, seed=0) == picked
    assert attack_subset(pool, 0.1, seed=1) != picked
    assert attack_subset(pool, 1.0, seed=5) == pool
    assert len(attack_subset(range(800), 0.05, seed=0)) == 40


def test_attack_subset_too_small():
    with pytest.raises(ValueError, match="attack budget too small"):
        attack_subset(range(9), 0.1, seed=0)
    with pytest.raises(ValueError):
        attack_subset(range(10), 0.0, seed=0)


def test_attack_run_config_defaults():
    pretrain = fast_run(learning_rate=1e-3, batch_size=48, lam=2.0)
    cfg = attack_run_config(AttackSpec(family="target_ft", strategy="direct_all", epochs=3, seed=9), pretrain)
    assert cfg.learning_rate == pytest.approx(1e-4)
    assert cfg.batch_size == 48
    assert cfg.seed == 9 and cfg.epochs == 3
    assert cfg.lam is None
    own = attack_run_config(AttackSpec(family="target_ft", strategy="direct_all", learning_rate=0.05), pretrain)
    assert own.learning_rate == 0.05


def test_attack_spec_compatibility():
    with pytest.raises(ValueError, match="not valid for family"):
        AttackSpec(family="sfda", strategy="direct_all")
    with pytest.raises(ValueError):
        AttackSpec(family="target_ft", strategy="transntl")
    assert AttackSpec(family="source_ft", strategy="transntl").label == "source_ft:transntl"


def test_direct_fc_keeps_phi():
    prepared = tiny_prepared()
    model = tiny_model(0)
    before = _state(model.phi)
    indices = attack_subset(prepared.target_split.train, 0.5, seed=0)
    attacked = finetune_attack(model, prepared.pair.target, indices, "direct_FC", fast_run(epochs=2, learning_rate=1e-2))
    assert _same(before, attacked.phi.state_dict())
    assert not torch.equal(attacked.omega.weight, model.omega.weight)
    assert all(p.requires_grad for p in attacked.parameters())


def test_init_fc_zero_epochs_resets_head_only():
    prepared = tiny_prepared()
    model = tiny_model(0)
    indices = attack_subset(prepared.target_split.train, 0.5, seed=0)
    attacked = finetune_attack(model, prepared.pair.target, indices, "initFC_FC", fast_run(epochs=0, seed=3))
    assert _same(_state(model.phi), attacked.phi.state_dict())
    assert not torch.equal(attacked.omega.weight, model.omega.weight)


def test_attacks_leave_input_untouched():
    prepared = tiny_prepared()
    model = tiny_model(0)
    checksum = parameter_checksum(model)
    indices = attack_subset(prepared.target_split.train, 0.5, seed=0)
    for strategy in ("initFC_all", "initFC_FC", "direct_FC", "direct_all"):
        finetune_attack(model, prepared.pair.target, indices, strategy, fast_run())
    shot_attack(model, prepared.pair.target, indices, fast_run())
    source_idx = attack_subset(prepared.source_split.train, 0.5, seed=0)
    transntl_attack(model, prepared.pair.source, source_idx, perturbation_set("transntl_default", 0.2), fast_run())
    assert parameter_checksum(model) == checksum


def test_transntl_reads_source_only():
    prepared = tiny_prepared()
    model = tiny_model(0)
    pset = perturbation_set("transntl_default", 0.2)
    source_idx = attack_subset(prepared.source_split.train, 0.5, seed=0)
    log = ProvenanceLog()
    attacked = transntl_attack(model, prepared.pair.source, source_idx, pset, fast_run(), log)
    assert log.reads("target") == 0
    assert log.reads("source", "images") == len(source_idx)
    assert parameter_checksum(attacked) != parameter_checksum(model)

    with pytest.raises(ValueError, match="nonempty"):
        transntl_attack(model, prepared.pair.source, source_idx, [], fast_run())
    target_idx = attack_subset(prepared.target_split.train, 0.5, seed=0)
    with pytest.raises(ProvenanceViolation):
        transntl_attack(model, prepared.pair.target, target_idx, pset, fast_run())


def test_shot_keeps_omega_and_never_reads_labels():
    prepared = tiny_prepared()
    model = tiny_model(0)
    indices = attack_subset(prepared.target_split.train, 0.5, seed=0)
    log = ProvenanceLog()
    attacked = shot_attack(model, prepared.pair.target, indices, fast_run(epochs=2), log)
    assert _same(_state(model.omega), attacked.omega.state_dict())
    assert not _same(_state(model.phi), attacked.phi.state_dict())
    assert log.reads("target", "labels") == 0
    assert log.reads("target", "images") == len(indices)


def test_shot_needs_enough_samples():
    prepared = tiny_prepared()
    with pytest.raises(ValueError, match="insufficient adaptation data"):
        shot_attack(tiny_model(0), prepared.pair.target, prepared.target_split.train[:9], fast_run())


def test_shot_pseudo_labels_match_brute_force():
    gen = torch.Generator().manual_seed(0)
    feats = torch.randn(30, 5, generator=gen, dtype=torch.float64)
    probs = torch.softmax(torch.randn(30, 4, generator=gen, dtype=torch.float64), dim=-1)
    labels = shot_pseudo_labels(feats, probs)

    rows = []
    for f in feats.tolist():
        aug = f + [1.0]
        norm = math.sqrt(sum(v * v for v in aug))
        rows.append([v / norm for v in aug])
    centroids = []
    for c in range(4):
        w = [float(probs[i, c]) for i in range(30)]
        total = sum(w)
        centroids.append([sum(w[i] * rows[i][d] for i in range(30)) / total for d in range(6)])

    def cosine_distance(u, v):
        dot = sum(a * b for a, b in zip(u, v))
        return 1.0 - dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))

    expected = [min(range(4), key=lambda c: cosine_distance(r, centroids[c])) for r in rows]
    assert labels.tolist() == expected


def test_information_maximization_loss():
    confident_diverse = torch.eye(4) * 50.0
    collapsed = torch.zeros(4, 4)
    collapsed[:, 0] = 50.0
    assert float(information_maximization_loss(confident_diverse)) < float(information_maximization_loss(collapsed))
    assert float(information_maximization_loss(confident_diverse)) == pytest.approx(-math.log(4), abs=1e-3)


def test_battery_rows_and_determinism():
    prepared = tiny_prepared()
    model = tiny_model(0)
    specs = [
        AttackSpec(family="target_ft", strategy="initFC_all", budget_fraction=0.5, epochs=1),
        AttackSpec(family="source_ft", strategy="direct_FC", budget_fraction=0.5, epochs=1),
        AttackSpec(family="sfda", strategy="shot", budget_fraction=0.5, epochs=1),
    ]
    assert run_threat_battery(model, prepared, [], fast_run()) == []

    rows = run_threat_battery(model, prepared, specs, fast_run())
    again = run_threat_battery(model, prepared, specs, fast_run())
    assert [r.spec.label for r in rows] == ["target_ft:initFC_all", "source_ft:direct_FC", "sfda:shot"]
    assert all(r.pre == rows[0].pre for r in rows)
    assert [r.post for r in rows] == [r.post for r in again]
    assert rows[1].provenance.get("target.images", 0) == 0
    assert rows[2].provenance.get("target.labels", 0) == 0


if __name__ == "__main__":
    main_for(globals(), "Attack Tests")
