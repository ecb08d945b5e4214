# attacks/subset.py

from typing import List, Sequence

import numpy as np

from ..models import AttackSpec, RunConfig


def attack_subset(indices: Sequence[int], fraction: float, seed: int) -> List[int]:
    """
    Uniformly sample floor(fraction * N) of the given indices without replacement.

    The result is sorted, so fraction 1.0 returns the whole split in order.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("budget fraction must lie in (0, 1]")
    pool = np.asarray(list(indices), dtype=np.int64)
    size = int(np.floor(fraction * len(pool) + 1e-9))
    if size == 0:
        raise ValueError("attack budget too small")
    chosen = np.random.default_rng(seed).choice(pool, size=size, replace=False)
    return sorted(chosen.tolist())


def attack_run_config(spec: AttackSpec, pretrain: RunConfig) -> RunConfig:
    """
    Schedule for one attack: the pre-training optimizer family at 0.1x its
    learning rate unless the attack sets its own.
    """
    return pretrain.model_copy(update={
        "seed": spec.seed,
        "epochs": spec.epochs,
        "learning_rate": spec.learning_rate if spec.learning_rate is not None else 0.1 * pretrain.learning_rate,
        "batch_size": spec.batch_size if spec.batch_size is not None else pretrain.batch_size,
        "lam": None,
        "clamp_bound": None,
    })
