#!/usr/bin/env python3
"""
Example usage of the ntlbench pipeline.

This demonstrates the full workflow:
1. Train a preset (data, model, method, threat battery)
2. Attack the stored run again with other strategies
3. Load the stored checkpoint and re-evaluate it
4. Build a domain pair and train by hand, without a config
5. Write report tables
"""

from pathlib import Path

from src.checkpoint import load_checkpoint
from src.methods import train_method
from src.models import ArchSpec, AttackSpec, MethodSpec, ObjectiveSpec, RunConfig, ShiftSpec
from src.network import build_model, evaluate_metrics
from src.pipeline import prepare_data, quick_run, run_attacks
from src.registry import RunRegistry
from src.report import emit_report

OUTPUT = Path("example_output")


def example_basic():
    """Basic example using the quick_run helper."""
    print("=== BASIC EXAMPLE ===\n")

    record = quick_run("minimal", registry_root=OUTPUT / "runs")

    print(f"\nRun {record.run_id} ({record.method})")
    print(f"  - Test SA: {record.pretrain.SA:.1f}")
    print(f"  - Test TA: {record.pretrain.TA:.1f}")
    print(f"  - Test OA: {record.pretrain.OA:.1f}")
    return record


def example_reattack(run_id: str):
    """Attack a stored run with a labeled target subset and with SHOT."""
    print("\n=== RE-ATTACK EXAMPLE ===\n")

    specs = [
        AttackSpec(family="target_ft", strategy="direct_all", budget_fraction=0.5, epochs=2),
        AttackSpec(family="sfda", strategy="shot", budget_fraction=0.5, epochs=2),
    ]
    child = run_attacks(run_id, specs, RunRegistry(OUTPUT / "runs"))

    for attack in child.attacks:
        d_sa, d_ta, _ = attack.deltas()
        print(f"  {attack.label}: TA {attack.pre.TA:.1f} -> {attack.post.TA:.1f} ({d_ta:+.1f}), ΔSA {d_sa:+.1f}")
    return child


def example_inspect_checkpoint(run_id: str):
    """Load a stored checkpoint and evaluate it on the validation split."""
    print("\n=== INSPECT CHECKPOINT EXAMPLE ===\n")

    record = RunRegistry(OUTPUT / "runs").load(run_id)
    model = load_checkpoint(record.artifacts["checkpoint"], expected_arch=record.config.model)
    prepared = prepare_data(record.config.dataset)
    val = evaluate_metrics(model, prepared, "val")

    print(f"Loaded {record.artifacts['checkpoint']}")
    print(f"  Conv channels: {model.arch.conv_channels}")
    print(f"  Validation SA {val.SA:.1f}  TA {val.TA:.1f}  OA {val.OA:.1f}")
    assert val == record.val


def example_programmatic():
    """Train SL and NTL side by side without an experiment config."""
    print("\n=== PROGRAMMATIC EXAMPLE ===\n")

    from src.data import make_domain_pair, split_811, synthesize_glyphs
    from src.core import PreparedPair

    # 1. Data
    print("Step 1: Synthesizing glyphs...")
    base = synthesize_glyphs(num_samples=400, seed=0, image_size=16)
    pair = make_domain_pair(base, [ShiftSpec(kind="rotation", magnitude=0.6)], seed=0)
    split = split_811(base, seed=0)
    prepared = PreparedPair(pair, split, split)
    print(f"  {len(base)} images per domain, shift {pair.shift_desc}")

    # 2. Methods
    arch = ArchSpec(image_size=16, conv_channels=[8, 16])
    run = RunConfig(epochs=3, batch_size=32)
    objective = ObjectiveSpec(target_output_reg="max_kl_to_label", target_feature_reg=["max_mmd"], clamp_bound=4.0)

    for spec in (MethodSpec(name="sl"), MethodSpec(name="ntl", objective=objective)):
        print(f"Step 2: Training {spec.name}...")
        result = train_method(build_model(arch, seed=0), prepared, spec, run)
        m = evaluate_metrics(result.model, prepared)
        print(f"  {spec.name}: SA {m.SA:.1f}  TA {m.TA:.1f}  OA {m.OA:.1f}")


def example_report():
    """Write CSV / Markdown / PNG reports for every registered run."""
    print("\n=== REPORT EXAMPLE ===\n")

    registry = RunRegistry(OUTPUT / "runs")
    outputs = emit_report(list(registry.records()), OUTPUT / "report", plot=True)
    for kind, path in outputs.items():
        print(f"  {kind}: {path}")


if __name__ == "__main__":
    import sys

    OUTPUT.mkdir(exist_ok=True)

    print("ntlbench Examples")
    print("=" * 50)

    try:
        record = example_basic()
        example_reattack(record.run_id)
        example_inspect_checkpoint(record.run_id)
        example_programmatic()
        example_report()

        # Uncomment for a full-size preset (several minutes on CPU):
        # quick_run("glyphs_ntl", registry_root=OUTPUT / "runs")

        print("\n" + "=" * 50)
        print("✓ All examples completed successfully!")
        print(f"  Outputs are in {OUTPUT}/")

    except Exception as e:
        print(f"\n✗ Error: {e}")
        sys.exit(1)
