# methods/defense.py

from typing import Callable, Optional, Sequence

import torch
import torch.nn as nn

from ..auxgen import Augmentation
from ..objectives import kl_divergence

Perturbation = Callable[..., torch.Tensor]


def perturb(p: Perturbation, x: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Apply one perturbation; plain callables are called without a generator."""
    if isinstance(p, Augmentation):
        return p(x, generator=generator)
    return p(x)


def transntl_defense_term(
    model: nn.Module,
    source_batch: torch.Tensor,
    perturbation_set: Sequence[Perturbation],
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    Consistency of predictions under source-side perturbations.

    Mean over p of KL(f(p(x)) || sg(f(x))). Training with this term keeps
    the source-domain behavior stable under the same perturbations a
    TransNTL attacker uses to repair the model.
    """
    if len(perturbation_set) == 0:
        raise ValueError("perturbation set must be nonempty")
    with torch.no_grad():
        reference = torch.softmax(model(source_batch), dim=-1)
    total = source_batch.new_zeros(())
    for p in perturbation_set:
        probs = torch.softmax(model(perturb(p, source_batch, generator)), dim=-1)
        total = total + kl_divergence(probs, reference).mean()
    return total / len(perturbation_set)
