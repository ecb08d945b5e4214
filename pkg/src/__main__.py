"""
CLI entry point for ntlbench.

Usage:
    python -m src <command> [options]

Commands:
    train <config>                 pre-train (and attack) one experiment, print its run_id
    attack <run_id> [--attack F:S] run a threat battery against a stored run
    report [run_id ...]            write report.csv / report.md (/ report.png with --plot)
    sweep <config>                 train the five sweep variants, print the winner's run_id
    validate-config <config>       check a config; --dump-defaults prints it fully defaulted

Examples:
    # Built-in preset
    python -m src train glyphs_ntl

    # Attack a stored run with two strategies at a 10% budget
    python -m src attack 3f2a9c01d4e5b6a7 --attack target_ft:direct_all --attack sfda:shot

    # Report on every registered run, with a plot
    python -m src report --all --plot --out report/

Exit codes: 0 success, 1 failure, 2 invalid config, 3 divergence.
Set NTLBENCH_REGISTRY to override the registry root.
"""

import argparse
import logging
import sys
from typing import List

from pydantic import ValidationError

from .errors import ConfigError, DivergenceError, RunNotFoundError
from .experiment import ExperimentConfig
from .models import AttackSpec
from .pipeline import run_attacks, run_experiment, sweep
from .registry import RunRegistry
from .report import emit_report

logger = logging.getLogger("ntlbench")

EXIT_OK, EXIT_FAILURE, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3


def format_validation_error(error: ValidationError) -> str:
    """One line per failing field, as a dotted path."""
    lines = [f"invalid config ({error.error_count()} errors):"]
    for e in error.errors():
        path = ".".join(str(part) for part in e["loc"]) or "<root>"
        lines.append(f"  {path}: {e['msg']}")
    return "\n".join(lines)


def load_config(name_or_path: str) -> ExperimentConfig:
    return ExperimentConfig.from_yaml(ExperimentConfig.resolve(name_or_path))


def registry_for(args: argparse.Namespace, default: str = "runs") -> RunRegistry:
    if args.registry:
        return RunRegistry(args.registry)
    return RunRegistry.from_env(default)


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    record = run_experiment(config, registry_for(args, config.output_dir))
    print(record.run_id)
    return EXIT_OK


def parse_attack(text: str, args: argparse.Namespace) -> AttackSpec:
    family, sep, strategy = text.partition(":")
    if not sep:
        raise ConfigError(f"attack must be written family:strategy, got '{text}'")
    return AttackSpec(
        family=family,
        strategy=strategy,
        budget_fraction=args.budget,
        epochs=args.epochs,
        seed=args.seed,
    )


def cmd_attack(args: argparse.Namespace) -> int:
    registry = registry_for(args)
    specs: List[AttackSpec] = [parse_attack(a, args) for a in args.attack or []]
    if args.from_config:
        specs += load_config(args.from_config).attacks
    if not specs:
        specs = list(registry.load(args.run_id).config.attacks)
    if not specs:
        raise ConfigError("no attacks given and the run's config lists none")
    record = run_attacks(args.run_id, specs, registry)
    print(record.run_id)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    registry = registry_for(args)
    run_ids = registry.list_ids() if args.all else args.run_ids
    records = list(registry.records(run_ids))
    outputs = emit_report(records, args.out, plot=args.plot)
    for kind, path in outputs.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(sweep(config, registry_for(args, config.output_dir)))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.dump_defaults:
        print(config.to_yaml(), end="")
    else:
        print(f"✓ {args.config} is valid (run_id {config.run_id()})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src",
        description="ntlbench: non-transferable learning training and attack benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--registry", help="Registry root (default: $NTLBENCH_REGISTRY or the config's output_dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Pre-train one experiment")
    p.add_argument("config", help="Config YAML or built-in preset name")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="Attack a stored run")
    p.add_argument("run_id", help="Run to attack")
    p.add_argument("--attack", "-a", action="append", help="family:strategy (repeatable)")
    p.add_argument("--from-config", help="Take the attacks block of this config")
    p.add_argument("--budget", type=float, default=0.10, help="Budget fraction (default: 0.10)")
    p.add_argument("--epochs", type=int, default=10, help="Attack epochs (default: 10)")
    p.add_argument("--seed", type=int, default=0, help="Attack seed (default: 0)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="Write report tables")
    p.add_argument("run_ids", nargs="*", help="Runs to include")
    p.add_argument("--all", action="store_true", help="Include every registered run")
    p.add_argument("--out", "-o", default="report", help="Output directory (default: report)")
    p.add_argument("--plot", action="store_true", help="Also write report.png")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="Run a config's sweep block")
    p.add_argument("config", help="Config YAML or built-in preset name")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate-config", help="Validate a config")
    p.add_argument("config", help="Config YAML or built-in preset name")
    p.add_argument("--dump-defaults", action="store_true", help="Print the fully defaulted config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: List[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s",
    )

    try:
        return args.func(args)
    except ValidationError as e:
        print(format_validation_error(e), file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, FileNotFoundError) as e:
        print(f"✗ Invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except RunNotFoundError as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        print(f"\n✗ Error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
