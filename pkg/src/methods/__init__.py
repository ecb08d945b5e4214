# methods/__init__.py

from typing import Optional

import torch.nn as nn

from ..auxgen import make_cuti_style_batch
from ..core import PreparedPair, ProvenanceLog
from ..models import MethodSpec, RunConfig
from ..objectives import StyleProvider
from .common import BatchStream, TrainResult, seed_everything
from .defense import transntl_defense_term
from .dso import dso_perturb, train_dso
from .ntl import train_ntl, train_source_only
from .sophon import nonfinetunability_block, sophon_meta_gradient, train_sophon
from .supervised import train_supervised


def train_method(
    model: nn.Module,
    prepared: PreparedPair,
    spec: MethodSpec,
    cfg: RunConfig,
    log: Optional[ProvenanceLog] = None,
    style_provider: Optional[StyleProvider] = None,
) -> TrainResult:
    """Dispatch to the training pipeline named by spec.name."""
    if spec.name == "sl":
        return train_supervised(model, prepared.source, cfg, log, target=prepared.target)
    if spec.name in ("ntl", "cuti_style"):
        return train_ntl(model, prepared, spec, cfg, log, style_provider)
    if spec.name == "dso":
        return train_dso(model, prepared.source, spec, cfg, log)
    if spec.name == "sophon":
        return train_sophon(model, prepared, spec, cfg, log)
    if spec.name == "source_only_wrapper":
        return train_source_only(model, prepared.source, spec, cfg, log)
    raise ValueError(f"unknown method: {spec.name}")


__all__ = [
    "train_method",
    "train_supervised",
    "train_ntl",
    "train_source_only",
    "train_dso",
    "train_sophon",
    "dso_perturb",
    "sophon_meta_gradient",
    "nonfinetunability_block",
    "transntl_defense_term",
    "make_cuti_style_batch",
    "BatchStream",
    "TrainResult",
    "seed_everything",
]
