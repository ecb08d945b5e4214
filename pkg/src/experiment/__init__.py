# experiment/__init__.py

from .records import AttackResult, RunRecord
from .spec import EXAMPLES_DIR, DatasetBlock, ExperimentConfig, SweepBlock

__all__ = [
    "ExperimentConfig",
    "DatasetBlock",
    "SweepBlock",
    "RunRecord",
    "AttackResult",
    "EXAMPLES_DIR",
]
