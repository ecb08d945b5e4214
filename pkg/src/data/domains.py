"""
Domain pairs with controlled shifts, sequential pairing and the 8:1:1 split.
"""

import math
from typing import List, Sequence, Union

import numpy as np
import torch
import torchvision.transforms.functional as TF
from torchvision.transforms import InterpolationMode

from ..auxgen import perturbation_set
from ..core import DomainPair, LabeledDataset, SplitTriple
from ..models import ShiftSpec


def _rotate(images: torch.Tensor, magnitude: float) -> torch.Tensor:
    angle = 90.0 * magnitude
    quarter_turns = angle / 90.0
    if float(quarter_turns).is_integer():
        return torch.rot90(images, k=int(quarter_turns), dims=(2, 3))
    return TF.rotate(images, angle=angle, interpolation=InterpolationMode.BILINEAR)


def _stripes(shape: torch.Size, gen: torch.Generator) -> torch.Tensor:
    _, c, h, w = shape
    theta = float(torch.rand((), generator=gen)) * math.pi
    period = 4.0 + 4.0 * float(torch.rand((), generator=gen))
    yy, xx = torch.meshgrid(torch.arange(h, dtype=torch.float32), torch.arange(w, dtype=torch.float32), indexing="ij")
    wave = 0.5 + 0.5 * torch.sin(2 * math.pi * (xx * math.cos(theta) + yy * math.sin(theta)) / period)
    tint = torch.rand((c, 1, 1), generator=gen)
    return wave.unsqueeze(0) * tint


def apply_shift(images: torch.Tensor, shift: ShiftSpec, seed: int) -> torch.Tensor:
    """Transform an (N, C, H, W) batch; magnitude 0 is the identity for every kind."""
    m = shift.magnitude
    if m == 0:
        return images.clone()
    if shift.kind == "rotation":
        return _rotate(images, m)
    if shift.kind == "color_invert":
        return (1.0 - m) * images + m * (1.0 - images)
    if shift.kind == "channel_swap":
        perm = [(i + 1) % images.shape[1] for i in range(images.shape[1])]
        return (1.0 - m) * images + m * images[:, perm]
    gen = torch.Generator().manual_seed(seed)
    if shift.kind == "background_texture":
        texture = _stripes(images.shape, gen)
        return ((1.0 - 0.5 * m) * images + 0.5 * m * texture).clamp(0.0, 1.0)
    # corruption
    out = images
    for aug in perturbation_set("transntl_default", m):
        out = aug(out, generator=gen)
    return out.clamp(0.0, 1.0)


def make_domain_pair(
    base: LabeledDataset,
    shift: Union[ShiftSpec, Sequence[ShiftSpec]],
    seed: int = 0,
) -> DomainPair:
    """
    Source = base; target = base with the shift(s) applied in order, same labels.
    """
    shifts: List[ShiftSpec] = [shift] if isinstance(shift, ShiftSpec) else list(shift)
    images = base.images
    for i, s in enumerate(shifts):
        images = apply_shift(images, s, seed + i)
    desc = "+".join(s.describe() for s in shifts)
    source = base.relabel_domain("source")
    target = base.with_images(images, name=f"{base.name}-{desc}", domain="target", shift_desc=desc)
    return DomainPair(source=source, target=target, num_classes=base.num_classes, shift_desc=desc)


def sequential_pairs(domains: Sequence[LabeledDataset]) -> List[DomainPair]:
    """Pair the i-th and (i+1)-th domains."""
    if len(domains) < 2:
        raise ValueError("sequential pairing needs at least 2 domains")
    pairs = []
    for src, tgt in zip(domains[:-1], domains[1:]):
        pairs.append(DomainPair(
            source=src.relabel_domain("source"),
            target=tgt.relabel_domain("target"),
            num_classes=src.num_classes,
            shift_desc=f"{src.name}->{tgt.name}",
        ))
    return pairs


def split_811(dataset: Union[LabeledDataset, int], seed: int) -> SplitTriple:
    """
    Random 8:1:1 split. val and test get floor(N/10) each; the remainder goes to train.
    """
    n = dataset if isinstance(dataset, int) else len(dataset)
    if n < 10:
        raise ValueError(f"split_811 needs at least 10 examples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_holdout = n // 10
    val = perm[:n_holdout]
    test = perm[n_holdout:2 * n_holdout]
    train = perm[2 * n_holdout:]
    return SplitTriple(
        train=sorted(train.tolist()),
        val=sorted(val.tolist()),
        test=sorted(test.tolist()),
        seed=seed,
    )
