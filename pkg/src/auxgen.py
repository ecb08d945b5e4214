"""
Auxiliary domains built from source data, and the TransNTL perturbation set.

All augmentation magnitudes are normalized to [0, 1]; _OP_SCALES maps that
knob onto each op's native parameter. Magnitude 0 is the identity for every
op. Every generator preserves labels and dataset size, and is deterministic
given its seed.

Op scaling at magnitude m:
    gaussian_noise   additive N(0, (0.3 m)^2)
    gaussian_blur    sigma = 2.0 m
    solarize         invert pixels >= 1 - 0.5 m
    sharpness        factor 1 + 4 m
    color_invert     (1 - m) x + m (1 - x)
    rotation         +/- 45 m degrees
    contrast         factor 1 - 0.8 m
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import torch
import torchvision.transforms.functional as TF
from torchvision.transforms import InterpolationMode

from .core import LabeledDataset, ProvenanceLog
from .models import AugmentationSpec

logger = logging.getLogger(__name__)

_OP_SCALES: Dict[str, float] = {
    "gaussian_noise": 0.3,
    "gaussian_blur": 2.0,
    "solarize": 0.5,
    "sharpness": 4.0,
    "color_invert": 1.0,
    "rotation": 45.0,
    "contrast": 0.8,
}

ALL_OPS: Tuple[str, ...] = tuple(_OP_SCALES)
TRANSNTL_OPS: Tuple[str, ...] = ("gaussian_noise", "gaussian_blur", "contrast", "rotation")

STYLE_EPS = 1e-6


def apply_op(
    batch: torch.Tensor,
    op: str,
    magnitude: float,
    sign: float = 1.0,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Apply one augmentation op to an (N, C, H, W) batch in [0, 1]."""
    if op not in _OP_SCALES:
        raise ValueError(f"unknown augmentation op: {op}")
    if magnitude == 0:
        return batch
    strength = _OP_SCALES[op] * magnitude

    if op == "gaussian_noise":
        noise = torch.randn(batch.shape, generator=generator, dtype=batch.dtype)
        return (batch + strength * noise).clamp(0.0, 1.0)
    if op == "gaussian_blur":
        kernel = 2 * math.ceil(2 * strength) + 1
        return TF.gaussian_blur(batch, kernel_size=[kernel, kernel], sigma=[strength, strength])
    if op == "solarize":
        return TF.solarize(batch, threshold=1.0 - strength)
    if op == "sharpness":
        return TF.adjust_sharpness(batch, sharpness_factor=1.0 + strength).clamp(0.0, 1.0)
    if op == "color_invert":
        return (1.0 - strength) * batch + strength * (1.0 - batch)
    if op == "rotation":
        return TF.rotate(batch, angle=sign * strength, interpolation=InterpolationMode.BILINEAR)
    # contrast
    return TF.adjust_contrast(batch, contrast_factor=1.0 - strength).clamp(0.0, 1.0)


def strong_augment(batch: torch.Tensor, spec: AugmentationSpec, seed: int) -> torch.Tensor:
    """
    Apply spec.ops_per_sample randomly drawn ops to every image.

    Ops are drawn without replacement per image; rotation direction is drawn too.
    """
    for op in spec.ops:
        if op not in _OP_SCALES:
            raise ValueError(f"unknown augmentation op: {op}")
    gen = torch.Generator().manual_seed(seed)
    out = torch.empty_like(batch)
    for i in range(batch.shape[0]):
        chosen = torch.randperm(len(spec.ops), generator=gen)[: spec.ops_per_sample].tolist()
        img = batch[i:i + 1]
        for j in chosen:
            sign = 1.0 if torch.rand((), generator=gen).item() < 0.5 else -1.0
            img = apply_op(img, spec.ops[j], spec.magnitude, sign=sign, generator=gen)
        out[i] = img[0]
    return out.clamp(0.0, 1.0)


def restyle_statistics(
    batch: torch.Tensor,
    noise_std: float,
    generator: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    AdaIN with noised statistics, before clipping.

    Returns (styled, target_mean, target_std) where the targets are
    (mu + eta_mu) and sigma * exp(eta_sigma) per image and channel.
    """
    n, c = batch.shape[:2]
    flat = batch.reshape(n, c, -1)
    mean = flat.mean(dim=-1, keepdim=True)
    std = flat.std(dim=-1, unbiased=False, keepdim=True).clamp_min(STYLE_EPS)
    eta_mu = noise_std * torch.randn((n, c, 1), generator=generator, dtype=batch.dtype)
    eta_sigma = noise_std * torch.randn((n, c, 1), generator=generator, dtype=batch.dtype)
    target_mean = mean + eta_mu
    target_std = std * torch.exp(eta_sigma)
    styled = (flat - mean) / std * target_std + target_mean
    return styled.reshape(batch.shape), target_mean.squeeze(-1), target_std.squeeze(-1)


def make_cuti_style_batch(
    source_batch: torch.Tensor,
    noise_std: float,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    Synthesize a randomly styled copy of a batch by noising its per-channel
    statistics; the result is clipped back to the input's value range.
    """
    if source_batch.shape[0] == 0:
        raise ValueError("cannot restyle an empty batch")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    styled, _, _ = restyle_statistics(source_batch, noise_std, generator)
    return styled.clamp(float(source_batch.min()), float(source_batch.max()))


def build_auxiliary_domain(
    source: LabeledDataset,
    strategy: Literal["strong_augment", "cuti_style"],
    params: Union[AugmentationSpec, Mapping[str, Any]],
    seed: int,
    log: Optional[ProvenanceLog] = None,
    chunk_size: int = 256,
) -> LabeledDataset:
    """
    Build a stand-in target domain from source data.

    Args:
        source: source dataset
        strategy: "strong_augment" (params: AugmentationSpec) or
            "cuti_style" (params: {"noise_std": float})
        params: strategy parameters
        seed: makes the output reproducible
        log: provenance log the source reads are recorded in

    Returns:
        Same-size dataset with source labels, tagged with provenance "auxiliary"
    """
    all_idx = torch.arange(len(source))
    images = source.fetch_images(all_idx, log)
    if strategy == "strong_augment":
        aug = params if isinstance(params, AugmentationSpec) else AugmentationSpec(**params)
        chunks = [
            strong_augment(images[s:s + chunk_size], aug, seed + s)
            for s in range(0, len(source), chunk_size)
        ]
        desc = f"strong_augment(ops={list(aug.ops)}, m={aug.magnitude:g})"
    elif strategy == "cuti_style":
        if isinstance(params, AugmentationSpec):
            raise ValueError("cuti_style expects {'noise_std': float}")
        noise_std = float(params.get("noise_std", 0.5))
        gen = torch.Generator().manual_seed(seed)
        chunks = [
            make_cuti_style_batch(images[s:s + chunk_size], noise_std, gen)
            for s in range(0, len(source), chunk_size)
        ]
        desc = f"cuti_style(noise_std={noise_std:g})"
    else:
        raise ValueError(f"unknown auxiliary strategy: {strategy}")

    logger.debug("built auxiliary domain %s from %s", desc, source.name)
    return source.with_images(
        torch.cat(chunks, dim=0),
        name=f"{source.name}-aux",
        domain="auxiliary",
        shift_desc=desc,
    )


@dataclass(frozen=True)
class Augmentation:
    """A single named perturbation at a fixed magnitude."""

    op: str
    magnitude: float

    def __call__(self, batch: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        return apply_op(batch, self.op, self.magnitude, sign=1.0, generator=generator)


def perturbation_set(kind: str = "transntl_default", magnitude: float = 0.2) -> List[Augmentation]:
    """The fixed, ordered perturbation family shared by TransNTL attack and defense."""
    if kind != "transntl_default":
        raise ValueError(f"unknown perturbation set: {kind}")
    if not 0.0 < magnitude <= 1.0:
        raise ValueError("perturbation magnitude must lie in (0, 1]")
    return [Augmentation(op, magnitude) for op in TRANSNTL_OPS]
