# data/idx_reader.py

import gzip
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..core import LabeledDataset
from ..errors import IDXFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def parse_idx(raw: bytes, expected_magic: int) -> np.ndarray:
    """
    Parse an unsigned-byte IDX payload.

    Header: 4-byte big-endian magic (0x00000803 images, 0x00000801 labels),
    then one 4-byte big-endian size per dimension, then the data.
    """
    if len(raw) < 4:
        raise IDXFormatError("truncated IDX header", offset=len(raw))
    magic = int.from_bytes(raw[0:4], "big")
    if magic != expected_magic:
        raise IDXFormatError(
            f"bad IDX magic 0x{magic:08X}, expected 0x{expected_magic:08X}", offset=0
        )
    ndim = expected_magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IDXFormatError("truncated IDX dimension table", offset=len(raw))
    dims = tuple(int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim))
    expected = int(np.prod(dims))
    payload = len(raw) - header_len
    if payload != expected:
        raise IDXFormatError(
            f"IDX payload holds {payload} bytes, dimensions {dims} need {expected}",
            offset=header_len,
        )
    return np.frombuffer(raw, dtype=">u1", offset=header_len).reshape(dims)


def read_idx(path: str | Path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    return parse_idx(_read_bytes(path), expected_magic)


def load_idx_dataset(
    images_path: str | Path,
    labels_path: str | Path,
    image_size: int = 32,
    num_samples: int | None = None,
    name: str = "digits",
) -> LabeledDataset:
    """
    Load an IDX digit set as 3-channel images resized to image_size.

    The first num_samples examples are kept when given.
    """
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if num_samples is not None:
        images, labels = images[:num_samples], labels[:num_samples]

    x = torch.from_numpy(images.astype(np.float32) / 255.0).unsqueeze(1)
    if x.shape[-1] != image_size or x.shape[-2] != image_size:
        x = F.interpolate(x, size=(image_size, image_size), mode="bilinear", align_corners=False)
    x = x.clamp(0.0, 1.0).repeat(1, 3, 1, 1)
    y = torch.from_numpy(labels.astype(np.int64))
    return LabeledDataset(x, y, num_classes=10, name=name)
