# data/load.py

from pathlib import Path
from typing import Any, Dict, Literal, Union

import yaml

from ..core import LabeledDataset
from .glyphs import synthesize_glyphs
from .idx_reader import load_idx_dataset


def _find_idx_file(directory: Path, kind: str) -> Path:
    pattern = "*images-idx3-ubyte*" if kind == "images" else "*labels-idx1-ubyte*"
    matches = sorted(directory.glob(pattern))
    if not matches:
        raise FileNotFoundError(f"no IDX {kind} file matching '{pattern}' in {directory}")
    return matches[0]


def load_or_synthesize(
    base: Literal["digits_idx", "synthetic_glyphs"],
    path_or_seed: Union[str, Path, int],
    num_samples: int = 2000,
    image_size: int = 32,
) -> LabeledDataset:
    """
    High-level dataset API. Supports:
      - digits_idx: a directory holding *images-idx3-ubyte[.gz] and *labels-idx1-ubyte[.gz]
      - synthetic_glyphs: procedurally rendered digits from an integer seed
    """
    if base == "synthetic_glyphs":
        if not isinstance(path_or_seed, int):
            raise ValueError("synthetic_glyphs needs an integer seed")
        return synthesize_glyphs(num_samples=num_samples, seed=path_or_seed, image_size=image_size)

    if base == "digits_idx":
        directory = Path(path_or_seed)
        if not directory.is_dir():
            raise FileNotFoundError(f"IDX directory not found: {directory}")
        return load_idx_dataset(
            _find_idx_file(directory, "images"),
            _find_idx_file(directory, "labels"),
            image_size=image_size,
            num_samples=num_samples,
            name=directory.name or "digits",
        )

    raise ValueError(f"Unsupported dataset base: {base}")


def dataset_metadata(dataset: LabeledDataset) -> Dict[str, Any]:
    return {
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "shape": [len(dataset), *dataset.image_shape],
        "shift_desc": dataset.shift_desc,
        "provenance": dataset.domain,
        "checksum": dataset.checksum(),
    }


def write_metadata(dataset: LabeledDataset, path: str | Path) -> Path:
    """Write the dataset's YAML sidecar (name, C, shape, shift_desc, checksum)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(dataset_metadata(dataset), f, sort_keys=False)
    return path


def read_metadata(path: str | Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"metadata sidecar not found: {path}")
    with open(path, "r") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValueError(f"Invalid metadata sidecar: expected dict, got {type(data)}")
    return data
