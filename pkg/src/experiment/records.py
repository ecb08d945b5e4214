"""
Persisted results: one RunRecord per pre-training run or attack run.

Deltas are never stored; they are recomputed from the stored pre/post
metrics whenever a record is read.
"""

from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from ..core import Metrics
from ..models import AttackSpec
from .spec import ExperimentConfig


class AttackResult(BaseModel):
    """One row of a threat battery."""

    spec: AttackSpec = Field(..., description="The attack that was run")
    pre: Metrics = Field(..., description="Test metrics before the attack")
    post: Metrics = Field(..., description="Test metrics after the attack")
    provenance: Dict[str, int] = Field(
        default_factory=dict, description="Dataset reads made by the attack, keyed domain.field"
    )

    @property
    def label(self) -> str:
        return self.spec.label

    def deltas(self) -> Tuple[float, float, float]:
        """Signed (dSA, dTA, dOA) = post - pre."""
        return self.post.minus(self.pre)


class RunRecord(BaseModel):
    """Everything needed to report on, or attack, one registered run."""

    run_id: str = Field(..., description="Content hash identifying the run")
    parent_id: Optional[str] = Field(None, description="Pre-training run an attack run derives from")
    created_at: datetime = Field(
        default_factory=lambda: datetime.now(timezone.utc), description="Registration time (UTC)"
    )
    config: ExperimentConfig = Field(..., description="Snapshot of the full experiment config")
    dataset_desc: str = Field("", description="Dataset and shift description for reports")
    pretrain: Metrics = Field(..., description="Test-split metrics of the trained model")
    val: Metrics = Field(..., description="Validation-split metrics of the trained model")
    attacks: List[AttackResult] = Field(default_factory=list, description="Threat battery results")
    wall_time_s: float = Field(0.0, ge=0, description="Wall-clock seconds spent producing the record")
    artifacts: Dict[str, str] = Field(
        default_factory=dict, description="Paths of stored artifacts (checkpoint, history)"
    )

    @property
    def method(self) -> str:
        return self.config.method.name
