# attacks/__init__.py

from .battery import BatteryRow, run_attack, run_threat_battery
from .finetune import finetune_attack, transntl_attack
from .shot import information_maximization_loss, shot_attack, shot_pseudo_labels
from .subset import attack_run_config, attack_subset

__all__ = [
    "attack_subset",
    "attack_run_config",
    "finetune_attack",
    "transntl_attack",
    "shot_attack",
    "shot_pseudo_labels",
    "information_maximization_loss",
    "run_attack",
    "run_threat_battery",
    "BatteryRow",
]
