# data/__init__.py

from .domains import make_domain_pair, sequential_pairs, split_811, apply_shift
from .glyphs import synthesize_glyphs
from .idx_reader import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, load_idx_dataset, parse_idx, read_idx
from .load import load_or_synthesize, read_metadata, write_metadata
from .triggers import apply_trigger, build_aa_pair, build_ov_pair

__all__ = [
    "load_or_synthesize",
    "synthesize_glyphs",
    "load_idx_dataset",
    "parse_idx",
    "read_idx",
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
    "make_domain_pair",
    "apply_shift",
    "sequential_pairs",
    "split_811",
    "apply_trigger",
    "build_ov_pair",
    "build_aa_pair",
    "write_metadata",
    "read_metadata",
]
