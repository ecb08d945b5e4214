"""
The model bundle f = omega(phi(x)) and its evaluation.

phi is built from an ArchSpec layer list; omega is one linear layer whose
softmax gives the class-probability vector. forward() returns logits so
losses stay in the log domain; predict_proba() returns probabilities.
"""

import hashlib
from typing import Iterator, List, Optional, Sequence

import torch
import torch.nn as nn

from .core import LabeledDataset, Metrics, PreparedPair, subset_indices
from .models import ArchSpec


def _build_phi(arch: ArchSpec) -> nn.Sequential:
    layers: List[nn.Module] = []
    prev = arch.in_channels
    for ch in arch.conv_channels:
        layers.append(nn.Conv2d(prev, ch, arch.kernel_size, padding=arch.kernel_size // 2))
        layers.append(nn.ReLU())
        layers.append(nn.MaxPool2d(2))
        prev = ch
    if arch.pooling == "avg":
        layers.append(nn.AdaptiveAvgPool2d(1))
    layers.append(nn.Flatten())
    return nn.Sequential(*layers)


class ModelBundle(nn.Module):
    """Feature extractor phi, classifier head omega and an optional domain head."""

    def __init__(self, arch: ArchSpec):
        super().__init__()
        self.arch = arch
        self.phi = _build_phi(arch)
        self.omega = nn.Linear(arch.feature_dim, arch.num_classes)
        self.aux_domain_head: Optional[nn.Linear] = (
            nn.Linear(arch.feature_dim, 2) if arch.domain_head else None
        )

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.phi(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.omega(self.phi(x))

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self(x), dim=-1)

    def phi_parameters(self) -> Iterator[nn.Parameter]:
        return self.phi.parameters()

    def omega_parameters(self) -> Iterator[nn.Parameter]:
        return self.omega.parameters()

    def reset_omega(self) -> None:
        """Re-draw omega from its fresh-init distribution (uses the global torch RNG)."""
        self.omega.reset_parameters()


def build_model(arch: ArchSpec, seed: Optional[int] = None) -> ModelBundle:
    if seed is not None:
        torch.manual_seed(seed)
    return ModelBundle(arch)


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state_dict order."""
    h = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@torch.no_grad()
def evaluate_accuracy(
    model: nn.Module,
    dataset: LabeledDataset,
    split: Sequence[int],
    batch_size: int = 512,
) -> float:
    """
    Percentage of correct argmax predictions over the split.

    Ties in the argmax resolve to the lowest class index.

    Raises:
        ValueError: on an empty split or when the model's class count differs
            from the dataset's
    """
    if len(split) == 0:
        raise ValueError("empty evaluation split")
    if getattr(model, "num_classes", dataset.num_classes) != dataset.num_classes:
        raise ValueError("class-count mismatch")

    was_training = model.training
    model.eval()
    idx = subset_indices(split)
    correct = 0
    for start in range(0, idx.numel(), batch_size):
        batch_idx = idx[start:start + batch_size]
        logits = model(dataset.images[batch_idx])
        if logits.shape[-1] != dataset.num_classes:
            raise ValueError("class-count mismatch")
        # torch.argmax returns the first maximal index
        pred = torch.argmax(logits, dim=-1)
        correct += int((pred == dataset.labels[batch_idx]).sum())
    model.train(was_training)
    return 100.0 * correct / idx.numel()


def evaluate_metrics(model: nn.Module, prepared: PreparedPair, part: str = "test") -> Metrics:
    """SA/TA/OA of a model on the given split part of both domains."""
    sa = evaluate_accuracy(model, prepared.pair.source, getattr(prepared.source_split, part))
    ta = evaluate_accuracy(model, prepared.pair.target, getattr(prepared.target_split, part))
    return Metrics.from_accuracies(sa, ta)
