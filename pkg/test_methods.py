#!/usr/bin/env python3
"""
Tests for the training pipelines: SL, NTL, CUTI-style, DSO, SOPHON, the
source-only wrapper and the consistency defense.
"""

import pytest
import torch
import torch.nn as nn

from conftest import fast_run, main_for, separable_blobs, tiny_model, tiny_prepared
from src.auxgen import Augmentation, perturbation_set
from src.core import DomainSplit, ProvenanceLog
from src.data import split_811
from src.errors import DivergenceError
from src.methods import (
    BatchStream,
    dso_perturb,
    nonfinetunability_block,
    sophon_meta_gradient,
    train_dso,
    train_method,
    train_ntl,
    train_sophon,
    train_source_only,
    train_supervised,
    transntl_defense_term,
)
from src.methods.dso import error_label_kl
from src.models import ArchSpec, MethodSpec, ObjectiveSpec
from src.network import build_model, evaluate_accuracy, parameter_checksum

NTL_OBJECTIVE = ObjectiveSpec(target_output_reg="max_kl_to_label", target_feature_reg=["max_mmd"], lam=1.0, clamp_bound=4.0)


def test_supervised_separates_blobs():
    blobs = separable_blobs()
    split = split_811(blobs, 0)
    arch = ArchSpec(image_size=16, conv_channels=[8, 16], num_classes=2)
    result = train_supervised(build_model(arch, seed=0), DomainSplit(blobs, split), fast_run(epochs=20, learning_rate=5e-3))
    assert evaluate_accuracy(result.model, blobs, split.train) >= 99.0
    assert len(result.history) == 20


def test_supervised_zero_epochs_returns_initial_model():
    model = tiny_model(0)
    result = train_supervised(model, tiny_prepared().source, fast_run(epochs=0))
    assert parameter_checksum(result.model) == parameter_checksum(model)
    assert result.model is not model
    assert len(result.history) == 0


def test_supervised_is_deterministic():
    prepared = tiny_prepared()
    a = train_supervised(tiny_model(0), prepared.source, fast_run(epochs=2), target=prepared.target)
    b = train_supervised(tiny_model(0), prepared.source, fast_run(epochs=2), target=prepared.target)
    assert parameter_checksum(a.model) == parameter_checksum(b.model)
    assert a.history.as_dict() == b.history.as_dict()


def test_supervised_aborts_on_divergence():
    prepared = tiny_prepared()
    poisoned = prepared.pair.source.with_images(torch.full_like(prepared.pair.source.images, float("nan")))
    with pytest.raises(DivergenceError, match="divergence detected"):
        train_supervised(tiny_model(0), DomainSplit(poisoned, prepared.source_split), fast_run())


def test_ntl_lambda_zero_matches_supervised():
    prepared = tiny_prepared()
    cfg = fast_run(epochs=2)
    spec = MethodSpec(name="ntl", objective=NTL_OBJECTIVE.model_copy(update={"lam": 0.0}))
    ntl = train_ntl(tiny_model(0), prepared, spec, cfg)
    sl = train_supervised(tiny_model(0), prepared.source, cfg)
    assert parameter_checksum(ntl.model) == parameter_checksum(sl.model)


def test_ntl_history_and_reads():
    prepared = tiny_prepared()
    log = ProvenanceLog()
    result = train_ntl(tiny_model(0), prepared, MethodSpec(name="ntl", objective=NTL_OBJECTIVE), fast_run(epochs=2), log)
    assert len(result.history) == 2
    assert all(ta is not None for ta in result.history.val_ta)
    assert log.reads("target", "labels") > 0
    assert log.reads("source", "images") == 2 * len(prepared.source_split.train)


def test_ntl_runconfig_lambda_override():
    prepared = tiny_prepared()
    cfg = fast_run(epochs=1).model_copy(update={"lam": 0.0})
    ntl = train_ntl(tiny_model(0), prepared, MethodSpec(name="ntl", objective=NTL_OBJECTIVE), cfg)
    sl = train_supervised(tiny_model(0), prepared.source, cfg)
    assert parameter_checksum(ntl.model) == parameter_checksum(sl.model)


def test_ntl_with_defense_and_cuti_style_run():
    prepared = tiny_prepared()
    defended = MethodSpec(name="ntl", objective=NTL_OBJECTIVE, defense_consistency_weight=1.0)
    cuti = MethodSpec(name="cuti_style", objective=NTL_OBJECTIVE, method_params={"style_noise_std": 0.3})
    for spec in (defended, cuti):
        result = train_method(tiny_model(0), prepared, spec, fast_run())
        assert len(result.history) == 1
        assert all(torch.isfinite(p).all() for p in result.model.parameters())


def test_method_params_validated():
    with pytest.raises(ValueError, match="not accepted"):
        MethodSpec(name="dso", method_params={"inner_steps": 3})
    assert MethodSpec(name="sophon").param("inner_steps") == 3


def test_dso_perturbation_respects_radius():
    prepared = tiny_prepared()
    model = tiny_model(0)
    x = prepared.pair.source.images[:16]
    y = prepared.pair.source.labels[:16]
    for radius in (0.05, 0.25):
        x_adv = dso_perturb(model, x, y, radius, steps=3, generator=torch.Generator().manual_seed(0))
        assert float((x_adv - x).abs().max()) <= radius + 1e-6
        assert float(x_adv.min()) >= 0.0 and float(x_adv.max()) <= 1.0
    assert torch.equal(dso_perturb(model, x, y, 0.0, steps=3), x)


def test_dso_loss_is_error_label_cross_entropy():
    gen = torch.Generator().manual_seed(4)
    logits = torch.randn(12, 10, generator=gen, dtype=torch.float64)
    y = torch.randint(0, 10, (12,), generator=gen)
    value = error_label_kl(logits, y)
    assert torch.isfinite(value)
    expected = nn.functional.cross_entropy(logits, (y + 1) % 10)
    assert float(value) == pytest.approx(float(expected), abs=1e-10)


def test_dso_never_reads_target():
    prepared = tiny_prepared()
    log = ProvenanceLog()
    spec = MethodSpec(name="dso", objective=ObjectiveSpec(target_output_reg="min_kl_to_error_label"))
    result = train_dso(tiny_model(0), prepared.source, spec, fast_run(), log)
    assert log.reads("target") == 0
    assert log.reads("source", "images") > 0
    assert len(result.history) == 1


def test_source_only_wrapper_never_reads_target():
    prepared = tiny_prepared()
    log = ProvenanceLog()
    spec = MethodSpec(name="source_only_wrapper", objective=NTL_OBJECTIVE)
    result = train_source_only(tiny_model(0), prepared.source, spec, fast_run(), log)
    assert log.reads("target") == 0
    assert log.reads("auxiliary", "images") > 0
    assert len(result.history) == 1

    styled = MethodSpec(name="source_only_wrapper", objective=NTL_OBJECTIVE, method_params={"aux_strategy": "cuti_style"})
    log = ProvenanceLog()
    train_method(tiny_model(0), prepared, styled, fast_run(), log)
    assert log.reads("target") == 0


def test_sophon_requires_inner_steps():
    spec = MethodSpec(name="sophon", method_params={"inner_steps": 0})
    with pytest.raises(ValueError, match="sophon requires inner steps"):
        train_sophon(tiny_model(0), tiny_prepared(), spec, fast_run())


def test_sophon_block_with_zero_meta_lr_is_isolated():
    prepared = tiny_prepared()
    model = tiny_model(0)
    before = parameter_checksum(model)
    spec = MethodSpec(name="sophon", method_params={"inner_steps": 2, "meta_lr": 0.0})
    stream = BatchStream(prepared.pair.target, prepared.target_split.train, 32, seed=0)
    meta_opt = torch.optim.Adam(model.parameters(), lr=0.0)
    risk = nonfinetunability_block(model, stream, spec, meta_opt, iterations=2)
    assert parameter_checksum(model) == before
    assert risk == risk


def test_sophon_first_order_close_to_unrolled():
    torch.manual_seed(0)
    toy = nn.Linear(1, 2, bias=False)
    gen = torch.Generator().manual_seed(0)
    batches = [(torch.randn(8, 1, generator=gen), torch.randint(0, 2, (8,), generator=gen)) for _ in range(2)]
    first, _ = sophon_meta_gradient(toy, batches, inner_lr=0.05, second_order=False)
    full, _ = sophon_meta_gradient(toy, batches, inner_lr=0.05, second_order=True)
    g1, g2 = first[0].flatten(), full[0].flatten()
    assert float((g1 - g2).norm() / g2.norm()) < 0.2


def test_sophon_trains_and_records_history():
    spec = MethodSpec(name="sophon", method_params={"inner_steps": 1, "meta_iterations": 2})
    result = train_sophon(tiny_model(0), tiny_prepared(), spec, fast_run(epochs=2))
    assert len(result.history) == 2
    assert all(ta is not None for ta in result.history.val_ta)


def test_defense_term_properties():
    prepared = tiny_prepared()
    model = tiny_model(0)
    x = prepared.pair.source.images[:16]
    identity = [lambda t: t]
    assert abs(float(transntl_defense_term(model, x, identity))) < 1e-9

    pset = perturbation_set("transntl_default", 0.3)
    value = transntl_defense_term(model, x, pset, torch.Generator().manual_seed(0))
    assert float(value) >= 0.0

    deterministic = [Augmentation("gaussian_blur", 0.5), Augmentation("contrast", 0.5)]
    total = transntl_defense_term(model, x, deterministic)
    per = [float(transntl_defense_term(model, x, [p])) for p in deterministic]
    assert abs(float(total) - sum(per) / len(per)) < 1e-6

    with pytest.raises(ValueError):
        transntl_defense_term(model, x, [])


def test_training_histories_are_reproducible():
    prepared = tiny_prepared()
    spec = MethodSpec(name="ntl", objective=NTL_OBJECTIVE)
    a = train_ntl(tiny_model(0), prepared, spec, fast_run(epochs=2))
    b = train_ntl(tiny_model(0), prepared, spec, fast_run(epochs=2))
    assert a.history.as_dict() == b.history.as_dict()
    assert parameter_checksum(a.model) == parameter_checksum(b.model)


if __name__ == "__main__":
    main_for(globals(), "Training Method Tests")
