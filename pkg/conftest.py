"""
Shared builders for the test modules.

Everything here is small enough to run on a laptop CPU in seconds. The
builders are plain functions (cached where the result is immutable) so the
test modules can also be run directly as scripts.
"""

import sys
from functools import lru_cache
from typing import Callable, Dict

import torch

from src.core import LabeledDataset, PreparedPair
from src.data import make_domain_pair, split_811, synthesize_glyphs
from src.models import ArchSpec, RunConfig, ShiftSpec
from src.network import ModelBundle, build_model

TINY_ARCH = ArchSpec(image_size=16, conv_channels=[8, 16])
ROTATE_INVERT = [ShiftSpec(kind="rotation", magnitude=0.6), ShiftSpec(kind="color_invert", magnitude=0.6)]


@lru_cache(maxsize=None)
def tiny_glyphs(num_samples: int = 200, seed: int = 0) -> LabeledDataset:
    return synthesize_glyphs(num_samples=num_samples, seed=seed, image_size=16)


@lru_cache(maxsize=None)
def tiny_prepared(num_samples: int = 200, seed: int = 0) -> PreparedPair:
    """Rotation+invert glyph pair at 16px with one shared 8:1:1 split."""
    base = tiny_glyphs(num_samples, seed)
    pair = make_domain_pair(base, ROTATE_INVERT, seed=seed)
    split = split_811(base, seed)
    return PreparedPair(pair, split, split)


def tiny_model(seed: int = 0, arch: ArchSpec = TINY_ARCH) -> ModelBundle:
    return build_model(arch, seed=seed)


def fast_run(**overrides) -> RunConfig:
    params = dict(seed=0, epochs=1, batch_size=32, learning_rate=1e-3)
    params.update(overrides)
    return RunConfig(**params)


def separable_blobs(num_samples: int = 200, seed: int = 0) -> LabeledDataset:
    """Two classes: dark images (0) vs bright images (1), plus small noise."""
    gen = torch.Generator().manual_seed(seed)
    labels = torch.arange(num_samples) % 2
    base = 0.2 + 0.6 * labels.float()
    images = base.view(-1, 1, 1, 1) + 0.05 * torch.randn((num_samples, 3, 16, 16), generator=gen)
    return LabeledDataset(images.clamp(0.0, 1.0), labels, num_classes=2, name="blobs")


def run_tests(title: str, tests: Dict[str, Callable[[], None]]) -> int:
    """Run test functions directly and print a summary table; returns an exit code."""
    print(f"\nStarting {title}\n")
    results = {}
    for name, fn in tests.items():
        print("=" * 60)
        print(f"Testing {name}")
        print("=" * 60)
        try:
            fn()
            results[name] = True
        except Exception as e:
            print(f"  {type(e).__name__}: {e}")
            results[name] = False

    print("\n" + "=" * 60)
    print("Test Summary")
    print("=" * 60)
    for name, passed in results.items():
        print(f"{name:.<45} {'PASSED' if passed else 'FAILED'}")
    print("=" * 60)

    failed = [n for n, ok in results.items() if not ok]
    if failed:
        print(f"\n{len(failed)} test(s) failed. Check the output above for details.")
        return 1
    print("\nAll tests passed!")
    return 0


def main_for(module_globals: dict, title: str) -> None:
    """Collect a module's test_* functions and run them as a script."""
    tests = {
        name[len("test_"):].replace("_", " "): fn
        for name, fn in module_globals.items()
        if name.startswith("test_") and callable(fn)
    }
    sys.exit(run_tests(title, tests))
