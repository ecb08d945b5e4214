"""
Core domain types shared by every module.

Datasets are held in memory as image/label tensors. A DomainPair couples a
source and a target dataset over one label space; SplitTriple indexes the
8:1:1 train/val/test protocol; Metrics carries SA/TA/OA. Reads that pipelines
make through a ProvenanceLog are counted so the test suite can assert, e.g.,
that SHOT never touched a target label.
"""

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ProvenanceViolation


def _check_percentage(value: float) -> float:
    if not 0.0 <= value <= 100.0:
        raise ValueError("percentage out of range")
    return value


def overall_score(sa: float, ta: float) -> float:
    """OA = (SA + (100 - TA)) / 2; higher means better non-transferability overall."""
    _check_percentage(sa)
    _check_percentage(ta)
    return (sa + (100.0 - ta)) / 2.0


class Metrics(BaseModel):
    """Source accuracy, target accuracy and the overall score, all in percent."""

    model_config = ConfigDict(frozen=True)

    SA: float = Field(..., ge=0, le=100, description="Source-domain accuracy (%)")
    TA: float = Field(..., ge=0, le=100, description="Target-domain accuracy (%)")
    OA: float = Field(..., ge=0, le=100, description="Overall score (SA + 100 - TA) / 2")

    @model_validator(mode="after")
    def check_oa(self) -> "Metrics":
        if abs(self.OA - overall_score(self.SA, self.TA)) > 1e-9:
            raise ValueError(f"OA {self.OA} inconsistent with SA {self.SA} / TA {self.TA}")
        return self

    @classmethod
    def from_accuracies(cls, sa: float, ta: float) -> "Metrics":
        return cls(SA=sa, TA=ta, OA=overall_score(sa, ta))

    def minus(self, other: "Metrics") -> Tuple[float, float, float]:
        """Signed (dSA, dTA, dOA) of self relative to other."""
        return self.SA - other.SA, self.TA - other.TA, self.OA - other.OA


class SplitTriple(BaseModel):
    """Disjoint train/val/test index lists covering one domain's examples."""

    model_config = ConfigDict(frozen=True)

    train: List[int] = Field(..., description="Training indices")
    val: List[int] = Field(..., description="Validation indices")
    test: List[int] = Field(..., description="Test indices")
    seed: int = Field(..., description="Seed the split was drawn with")

    @model_validator(mode="after")
    def check_partition(self) -> "SplitTriple":
        parts = [set(self.train), set(self.val), set(self.test)]
        total = len(self.train) + len(self.val) + len(self.test)
        union = parts[0] | parts[1] | parts[2]
        if len(union) != total:
            raise ValueError("split lists overlap or contain duplicates")
        if union != set(range(total)):
            raise ValueError("split lists do not cover the full index set")
        return self

    @property
    def size(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)


class ProvenanceLog:
    """
    Counts dataset reads per (domain, field) and enforces forbidden reads.

    field is "images" or "labels"; domain is the dataset's provenance tag
    ("source", "target", "auxiliary").
    """

    def __init__(self, forbidden: Iterable[Tuple[str, str]] = ()):
        self.forbidden: Set[Tuple[str, str]] = set(forbidden)
        self.counts: Counter = Counter()

    def record(self, domain: str, fieldname: str, count: int) -> None:
        if (domain, fieldname) in self.forbidden:
            raise ProvenanceViolation(f"read of {domain} {fieldname} is forbidden in this pipeline")
        self.counts[(domain, fieldname)] += count

    def reads(self, domain: str, fieldname: Optional[str] = None) -> int:
        if fieldname is not None:
            return self.counts[(domain, fieldname)]
        return sum(n for (d, _), n in self.counts.items() if d == domain)

    def forbid(self, *pairs: Tuple[str, str]) -> "ProvenanceLog":
        self.forbidden.update(pairs)
        return self

    def as_dict(self) -> dict:
        return {f"{d}.{f}": n for (d, f), n in sorted(self.counts.items())}


class LabeledDataset:
    """
    An immutable labeled image dataset.

    images: float32 tensor (N, C, H, W) with values in [0, 1].
    labels: int64 tensor (N,) with values in {0..num_classes-1}.
    """

    def __init__(
        self,
        images: torch.Tensor,
        labels: torch.Tensor,
        num_classes: int,
        name: str = "dataset",
        domain: str = "source",
        shift_desc: str = "",
    ):
        if images.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got shape {tuple(images.shape)}")
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise ValueError("labels must be a vector with one entry per image")
        if num_classes < 1:
            raise ValueError("num_classes must be positive")
        if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
            raise ValueError(f"labels fall outside {{0..{num_classes - 1}}}")
        self._images = images.detach().to(torch.float32).contiguous()
        self._labels = labels.detach().to(torch.int64).contiguous()
        self.num_classes = num_classes
        self.name = name
        self.domain = domain
        self.shift_desc = shift_desc

    def __len__(self) -> int:
        return self._images.shape[0]

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self._images.shape[1:])  # type: ignore[return-value]

    @property
    def images(self) -> torch.Tensor:
        """Unlogged view for harness-side evaluation; pipelines use fetch_images."""
        return self._images

    @property
    def labels(self) -> torch.Tensor:
        return self._labels

    def fetch_images(self, idx: torch.Tensor, log: Optional[ProvenanceLog] = None) -> torch.Tensor:
        if log is not None:
            log.record(self.domain, "images", int(idx.numel()))
        return self._images[idx]

    def fetch_labels(self, idx: torch.Tensor, log: Optional[ProvenanceLog] = None) -> torch.Tensor:
        if log is not None:
            log.record(self.domain, "labels", int(idx.numel()))
        return self._labels[idx]

    def with_images(self, images: torch.Tensor, **overrides) -> "LabeledDataset":
        """Copy with replaced images (same labels); used by shift/trigger/augment builders."""
        kwargs = dict(
            num_classes=self.num_classes, name=self.name,
            domain=self.domain, shift_desc=self.shift_desc,
        )
        kwargs.update(overrides)
        return LabeledDataset(images, self._labels, **kwargs)

    def relabel_domain(self, domain: str) -> "LabeledDataset":
        return self.with_images(self._images, domain=domain)

    def label_histogram(self) -> List[int]:
        return torch.bincount(self._labels, minlength=self.num_classes).tolist()

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self._images.numpy()).tobytes())
        h.update(np.ascontiguousarray(self._labels.numpy()).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class DomainPair:
    """A source and a target dataset sharing one closed label space."""

    source: LabeledDataset
    target: LabeledDataset
    num_classes: int
    shift_desc: str = ""

    def __post_init__(self):
        for ds in (self.source, self.target):
            if ds.num_classes != self.num_classes:
                raise ValueError(
                    f"dataset '{ds.name}' declares {ds.num_classes} classes, pair declares {self.num_classes}"
                )
        if self.source.image_shape != self.target.image_shape:
            raise ValueError(
                f"image shapes differ: source {self.source.image_shape} vs target {self.target.image_shape}"
            )

    def swapped(self) -> "DomainPair":
        """Exchange roles: the target becomes the source and vice versa."""
        return DomainPair(
            source=self.target.relabel_domain("source"),
            target=self.source.relabel_domain("target"),
            num_classes=self.num_classes,
            shift_desc=self.shift_desc,
        )


@dataclass(frozen=True)
class DomainSplit:
    """A dataset together with its 8:1:1 split."""

    dataset: LabeledDataset
    split: SplitTriple


@dataclass(frozen=True)
class PreparedPair:
    """A DomainPair with splits for both domains; the unit methods and attacks consume."""

    pair: DomainPair
    source_split: SplitTriple
    target_split: SplitTriple

    @property
    def source(self) -> DomainSplit:
        return DomainSplit(self.pair.source, self.source_split)

    @property
    def target(self) -> DomainSplit:
        return DomainSplit(self.pair.target, self.target_split)

    @property
    def num_classes(self) -> int:
        return self.pair.num_classes


def subset_indices(indices: Sequence[int]) -> torch.Tensor:
    return torch.as_tensor(list(indices), dtype=torch.int64)


@dataclass
class TrainingHistory:
    """Per-epoch bookkeeping of a training run."""

    train_loss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    val_sa: List[float] = field(default_factory=list)
    val_ta: List[Optional[float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def as_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "train_acc": self.train_acc,
            "val_sa": self.val_sa,
            "val_ta": self.val_ta,
        }
