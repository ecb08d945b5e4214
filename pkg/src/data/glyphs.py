"""
Procedural digit-like glyphs so the whole suite runs offline.

Each glyph is a seven-segment digit with random box size, stroke thickness,
slant, position and colors, plus mild pixel noise. Labels are exactly
balanced before shuffling.
"""

import numpy as np
import torch

from ..core import LabeledDataset

# Segments: a top, b upper-right, c lower-right, d bottom, e lower-left, f upper-left, g middle.
DIGIT_SEGMENTS = {
    0: "abcdef",
    1: "bc",
    2: "abdeg",
    3: "abcdg",
    4: "bcfg",
    5: "acdfg",
    6: "acdefg",
    7: "abc",
    8: "abcdefg",
    9: "abcdfg",
}


def _segment_mask(seg: str, u: np.ndarray, v: np.ndarray, w: float, h: float, t: float) -> np.ndarray:
    hw, hh = w / 2.0, h / 2.0
    full_u = (u >= -hw) & (u <= hw)
    if seg == "a":
        return full_u & (v >= -hh) & (v <= -hh + t)
    if seg == "d":
        return full_u & (v >= hh - t) & (v <= hh)
    if seg == "g":
        return full_u & (np.abs(v) <= t / 2.0)
    left = (u >= -hw) & (u <= -hw + t)
    right = (u >= hw - t) & (u <= hw)
    upper = (v >= -hh) & (v <= 0)
    lower = (v >= 0) & (v <= hh)
    return {"f": left & upper, "b": right & upper, "e": left & lower, "c": right & lower}[seg]


def render_glyph(digit: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One (3, size, size) float image in [0, 1]."""
    w = rng.uniform(0.35, 0.5) * size
    h = rng.uniform(0.6, 0.75) * size
    t = rng.uniform(0.08, 0.13) * size
    cx = size / 2.0 + rng.uniform(-0.08, 0.08) * size
    cy = size / 2.0 + rng.uniform(-0.06, 0.06) * size
    shear = rng.uniform(-0.15, 0.15)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    v = yy - cy
    u = xx - cx + shear * v
    mask = np.zeros((size, size), dtype=bool)
    for seg in DIGIT_SEGMENTS[digit]:
        mask |= _segment_mask(seg, u, v, w, h, t)

    fg = rng.uniform(0.6, 1.0, size=3)
    bg = rng.uniform(0.0, 0.3, size=3)
    img = np.where(mask[None], fg[:, None, None], bg[:, None, None])
    img = img + rng.normal(0.0, 0.03, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthesize_glyphs(num_samples: int = 2000, seed: int = 0, image_size: int = 32) -> LabeledDataset:
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(num_samples) % 10)
    images = np.stack([render_glyph(int(d), image_size, rng) for d in labels])
    return LabeledDataset(
        torch.from_numpy(images),
        torch.from_numpy(labels.astype(np.int64)),
        num_classes=10,
        name=f"glyphs-s{seed}",
    )
