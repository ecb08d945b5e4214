"""
Owner-known triggers for ownership verification (OV) and applicability authorization (AA).

OV: clean data is the source domain and triggered data the target, so an NTL
model misclassifies exactly when the secret trigger is present.
AA: triggered (authorized) data is the source, clean data the target.
"""

from typing import Tuple

import torch

from ..core import DomainPair, LabeledDataset
from ..models import TriggerSpec


def trigger_patch(trig: TriggerSpec, channels: int) -> torch.Tensor:
    """The pattern as a (channels, k_h, k_w) tensor."""
    pattern = torch.tensor(trig.pattern, dtype=torch.float32)
    if pattern.ndim == 2:
        return pattern.unsqueeze(0).expand(channels, -1, -1)
    if pattern.shape[-1] != channels:
        raise ValueError(f"pattern has {pattern.shape[-1]} channels, images have {channels}")
    return pattern.permute(2, 0, 1)


def trigger_origin(trig: TriggerSpec, image_hw: Tuple[int, int], patch_hw: Tuple[int, int]) -> Tuple[int, int]:
    h, w = image_hw
    kh, kw = patch_hw
    if isinstance(trig.position, str):
        row = 0 if trig.position.startswith("top") else h - kh
        col = 0 if trig.position.endswith("left") else w - kw
    else:
        row, col = trig.position
    if row < 0 or col < 0 or row + kh > h or col + kw > w:
        raise ValueError(f"trigger patch out of bounds: {kh}x{kw} at ({row}, {col}) in {h}x{w}")
    return row, col


def apply_trigger(dataset: LabeledDataset, trig: TriggerSpec) -> LabeledDataset:
    """Blend the patch into every image; pixels outside the patch are untouched."""
    c, h, w = dataset.image_shape
    patch = trigger_patch(trig, c)
    kh, kw = patch.shape[1:]
    row, col = trigger_origin(trig, (h, w), (kh, kw))

    images = dataset.images.clone()
    region = images[:, :, row:row + kh, col:col + kw]
    images[:, :, row:row + kh, col:col + kw] = (1.0 - trig.alpha) * region + trig.alpha * patch
    return dataset.with_images(
        images, name=f"{dataset.name}-triggered", shift_desc=f"trigger@({row},{col}) alpha={trig.alpha:g}"
    )


def build_ov_pair(dataset: LabeledDataset, trig: TriggerSpec) -> DomainPair:
    """Source = clean data, target = triggered data."""
    triggered = apply_trigger(dataset, trig)
    return DomainPair(
        source=dataset.relabel_domain("source"),
        target=triggered.relabel_domain("target"),
        num_classes=dataset.num_classes,
        shift_desc="ownership-verification trigger",
    )


def build_aa_pair(dataset: LabeledDataset, trig: TriggerSpec) -> DomainPair:
    """Source = triggered (authorized) data, target = clean data."""
    ov = build_ov_pair(dataset, trig)
    aa = ov.swapped()
    return DomainPair(aa.source, aa.target, aa.num_classes, shift_desc="applicability-authorization trigger")
