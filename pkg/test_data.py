#!/usr/bin/env python3
"""
Tests for dataset loading, domain shifts, triggers and splits.
"""

import gzip
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import main_for, tiny_glyphs
from src.data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    apply_shift,
    apply_trigger,
    build_aa_pair,
    build_ov_pair,
    load_or_synthesize,
    make_domain_pair,
    parse_idx,
    read_metadata,
    sequential_pairs,
    split_811,
    synthesize_glyphs,
    write_metadata,
)
from src.errors import IDXFormatError
from src.models import ShiftSpec, TriggerSpec


def idx_bytes(array: np.ndarray, magic: int) -> bytes:
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    return header + array.astype(np.uint8).tobytes()


def test_parse_idx_happy_path():
    images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    parsed = parse_idx(idx_bytes(images, IDX_IMAGES_MAGIC), IDX_IMAGES_MAGIC)
    assert parsed.shape == (2, 3, 4)
    assert np.array_equal(parsed, images)


def test_parse_idx_bad_magic_names_offset():
    raw = idx_bytes(np.zeros((2, 2, 2), dtype=np.uint8), 0x00000802)
    with pytest.raises(IDXFormatError) as err:
        parse_idx(raw, IDX_IMAGES_MAGIC)
    assert "bad IDX magic 0x00000802" in str(err.value)
    assert err.value.offset == 0


def test_parse_idx_truncated_payload():
    raw = idx_bytes(np.zeros((4,), dtype=np.uint8), IDX_LABELS_MAGIC)[:-1]
    with pytest.raises(IDXFormatError) as err:
        parse_idx(raw, IDX_LABELS_MAGIC)
    assert err.value.offset == 8
    with pytest.raises(IDXFormatError, match="truncated"):
        parse_idx(b"\x00\x00", IDX_LABELS_MAGIC)


def test_load_idx_directory_with_gzip():
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(20, 28, 28)).astype(np.uint8)
    labels = (np.arange(20) % 10).astype(np.uint8)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        with gzip.open(tmp / "train-images-idx3-ubyte.gz", "wb") as f:
            f.write(idx_bytes(images, IDX_IMAGES_MAGIC))
        (tmp / "train-labels-idx1-ubyte").write_bytes(idx_bytes(labels, IDX_LABELS_MAGIC))

        ds = load_or_synthesize("digits_idx", tmp, num_samples=15, image_size=32)
        assert len(ds) == 15
        assert ds.image_shape == (3, 32, 32)
        assert ds.labels.tolist() == labels[:15].tolist()
        assert float(ds.images.min()) >= 0.0 and float(ds.images.max()) <= 1.0

    with pytest.raises(FileNotFoundError):
        load_or_synthesize("digits_idx", "/nonexistent/idx/dir")
    with pytest.raises(ValueError):
        load_or_synthesize("synthetic_glyphs", "not-a-seed")


def test_glyphs_balanced_and_deterministic():
    a = synthesize_glyphs(num_samples=100, seed=3, image_size=16)
    b = synthesize_glyphs(num_samples=100, seed=3, image_size=16)
    c = synthesize_glyphs(num_samples=100, seed=4, image_size=16)
    assert a.label_histogram() == [10] * 10
    assert a.checksum() == b.checksum()
    assert a.checksum() != c.checksum()
    assert a.image_shape == (3, 16, 16)


def test_shift_magnitude_zero_is_identity():
    images = tiny_glyphs().images[:8]
    for kind in ["rotation", "color_invert", "background_texture", "channel_swap", "corruption"]:
        out = apply_shift(images, ShiftSpec(kind=kind, magnitude=0.0), seed=0)
        assert torch.equal(out, images), kind


def test_shift_kinds():
    images = tiny_glyphs().images[:8]
    rotated = apply_shift(images, ShiftSpec(kind="rotation", magnitude=1.0), seed=0)
    assert torch.equal(rotated, torch.rot90(images, k=1, dims=(2, 3)))
    inverted = apply_shift(images, ShiftSpec(kind="color_invert", magnitude=1.0), seed=0)
    assert torch.allclose(inverted, 1.0 - images)
    for kind in ["background_texture", "corruption", "channel_swap"]:
        out = apply_shift(images, ShiftSpec(kind=kind, magnitude=0.7), seed=1)
        assert out.shape == images.shape
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0
        assert torch.equal(out, apply_shift(images, ShiftSpec(kind=kind, magnitude=0.7), seed=1))


def test_domain_pair_composes_shifts():
    base = tiny_glyphs()
    shifts = [ShiftSpec(kind="rotation", magnitude=0.6), ShiftSpec(kind="color_invert", magnitude=0.6)]
    pair = make_domain_pair(base, shifts, seed=0)
    assert torch.equal(pair.source.labels, pair.target.labels)
    assert pair.source.domain == "source" and pair.target.domain == "target"
    assert pair.shift_desc == "rotation@0.6+color_invert@0.6"
    assert not torch.equal(pair.source.images, pair.target.images)


def test_sequential_pairs():
    domains = [tiny_glyphs(100, s) for s in range(3)]
    pairs = sequential_pairs(domains)
    assert len(pairs) == 2
    assert pairs[1].source.checksum() == domains[1].relabel_domain("source").checksum()
    with pytest.raises(ValueError):
        sequential_pairs(domains[:1])


def test_split_811_sizes_and_determinism():
    split = split_811(1000, seed=7)
    assert (len(split.train), len(split.val), len(split.test)) == (800, 100, 100)
    assert split == split_811(1000, seed=7)
    assert split != split_811(1000, seed=8)
    odd = split_811(205, seed=0)
    assert (len(odd.train), len(odd.val), len(odd.test)) == (165, 20, 20)
    with pytest.raises(ValueError):
        split_811(9, seed=0)


def test_trigger_only_touches_patch():
    ds = tiny_glyphs()
    trig = TriggerSpec(position="top_left", alpha=1.0)
    triggered = apply_trigger(ds, trig)
    assert torch.equal(triggered.images[:, :, 4:, :], ds.images[:, :, 4:, :])
    assert torch.equal(triggered.images[:, :, :, 4:], ds.images[:, :, :, 4:])
    expected = torch.tensor(trig.pattern).expand(3, 4, 4)
    assert torch.equal(triggered.images[0, :, :4, :4], expected)

    with pytest.raises(ValueError, match="out of bounds"):
        apply_trigger(ds, TriggerSpec(position=(14, 14)))


def test_ov_and_aa_pairs():
    ds = tiny_glyphs()
    trig = TriggerSpec()
    ov = build_ov_pair(ds, trig)
    aa = build_aa_pair(ds, trig)
    assert torch.equal(ov.source.images, ds.images)
    assert torch.equal(aa.target.images, ds.images)
    assert torch.equal(aa.source.images, ov.target.images)


def test_metadata_sidecar_round_trip():
    ds = tiny_glyphs()
    with tempfile.TemporaryDirectory() as tmp:
        path = write_metadata(ds, Path(tmp) / "meta" / "glyphs.yaml")
        meta = read_metadata(path)
    assert meta["num_classes"] == 10
    assert meta["shape"] == [200, 3, 16, 16]
    assert meta["checksum"] == ds.checksum()


if __name__ == "__main__":
    main_for(globals(), "Data Tests")
