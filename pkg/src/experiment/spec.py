import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import ConfigError
from ..models import ArchSpec, AttackSpec, MethodSpec, ParamValue, RunConfig, ShiftSpec, TriggerSpec

EXAMPLES_DIR = Path(__file__).parent / "examples"
SWEEP_SIZE = 5


class DatasetBlock(BaseModel):
    """
    Which data to load and how the target domain is derived from it.

    Exactly one of `shifts` (domain-shift pair) or `trigger` (OV / AA pair)
    is given.
    """

    model_config = ConfigDict(frozen=True)

    base: Literal["digits_idx", "synthetic_glyphs"] = Field(
        "synthetic_glyphs", description="Base dataset loader"
    )
    seed: int = Field(0, description="Generator seed for synthetic_glyphs")
    path: Optional[str] = Field(None, description="IDX directory for digits_idx")
    num_samples: int = Field(2000, ge=10, description="Examples to synthesize or load")
    image_size: int = Field(32, gt=0, description="Square image side length")
    split_seed: int = Field(0, description="Seed of the 8:1:1 split (shared by both domains)")
    shifts: List[ShiftSpec] = Field(
        default_factory=list, description="Shifts applied in order to build the target domain"
    )
    trigger: Optional[TriggerSpec] = Field(None, description="Owner trigger for OV / AA")
    application: Literal["ov", "aa"] = Field(
        "ov", description="ov: triggered data is the target; aa: triggered data is the source"
    )

    @model_validator(mode="after")
    def check_target_definition(self) -> "DatasetBlock":
        if bool(self.shifts) == (self.trigger is not None):
            raise ValueError("give exactly one of 'shifts' or 'trigger'")
        if self.base == "digits_idx" and not self.path:
            raise ValueError("digits_idx requires 'path'")
        return self

    def describe(self) -> str:
        name = self.base if self.base == "digits_idx" else f"glyphs-s{self.seed}"
        if self.trigger is not None:
            return f"{name} {self.application.upper()}"
        return f"{name} " + "+".join(s.describe() for s in self.shifts)


class SweepBlock(BaseModel):
    """A one-parameter sweep over five candidate values."""

    model_config = ConfigDict(frozen=True)

    param_path: str = Field(..., description="Dotted path into the config, e.g. method.objective.lambda")
    values: List[ParamValue] = Field(..., description="Exactly five candidate values")

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: List[ParamValue]) -> List[ParamValue]:
        if len(v) != SWEEP_SIZE:
            raise ValueError(f"sweep lists {len(v)} values; exactly {SWEEP_SIZE} are required")
        return v


def _walk(data: Dict[str, Any], path: str) -> tuple[Dict[str, Any], str]:
    """Return the mapping that holds the last path component, and that component."""
    parts = path.split(".")
    node: Any = data
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ValueError(f"param_path '{path}' does not name a config field")
        node = node[part]
    last = parts[-1]
    if last == "lam" and isinstance(node, dict) and "lambda" in node:
        last = "lambda"
    if not isinstance(node, dict):
        raise ValueError(f"param_path '{path}' does not name a config field")
    if last not in node and parts[-2:-1] != ["method_params"]:
        raise ValueError(f"param_path '{path}' does not name a config field")
    return node, last


class ExperimentConfig(BaseModel):
    """
    One complete experiment: data, network, method, schedule, attacks.

    The whole experiment lives in one YAML file; run_id() hashes its
    canonical form, so identical files always map to the same run.
    """

    model_config = ConfigDict(frozen=True)

    name: str = Field("experiment", description="Human-readable experiment name")
    description: str = Field("", description="What the experiment demonstrates")
    dataset: DatasetBlock = Field(
        default_factory=lambda: DatasetBlock(shifts=[ShiftSpec(kind="rotation", magnitude=0.6)]),
        description="Data source and target-domain construction",
    )
    model: ArchSpec = Field(default_factory=ArchSpec, description="Network layout")
    method: MethodSpec = Field(default_factory=MethodSpec, description="NTL method")
    run: RunConfig = Field(default_factory=RunConfig, description="Pre-training schedule")
    attacks: List[AttackSpec] = Field(default_factory=list, description="Post-training threat battery")
    sweep: Optional[SweepBlock] = Field(None, description="Optional hyperparameter sweep")
    output_dir: str = Field("runs", description="Run registry root")

    @model_validator(mode="after")
    def check_consistency(self) -> "ExperimentConfig":
        if self.model.image_size != self.dataset.image_size:
            raise ValueError(
                f"model.image_size {self.model.image_size} != dataset.image_size {self.dataset.image_size}"
            )
        if self.model.in_channels != 3:
            raise ValueError("both dataset loaders produce 3-channel images; model.in_channels must be 3")
        if self.model.num_classes != 10:
            raise ValueError("both dataset loaders produce 10 classes; model.num_classes must be 10")
        # Style labels come from a caller-supplied provider; configs have no way to name one.
        if self.method.objective.target_output_reg == "min_kl_to_style_label":
            raise ValueError(
                "min_kl_to_style_label needs a style-label provider, which only "
                "train_method(..., style_provider=...) can supply; it cannot run from a config"
            )
        if "domain_confusion" in self.method.objective.target_feature_reg and not self.model.domain_head:
            raise ValueError("domain_confusion needs model.domain_head: true")
        if self.sweep is not None:
            _walk(self.to_dict(), self.sweep.param_path)
        return self

    @classmethod
    def from_yaml(cls, yaml_path: str | Path) -> "ExperimentConfig":
        """
        Load an ExperimentConfig from a YAML file.

        Raises:
            FileNotFoundError: If the YAML file doesn't exist
            ConfigError: If the YAML isn't a mapping
            pydantic.ValidationError: If it fails schema validation
        """
        yaml_path = Path(yaml_path)
        if not yaml_path.exists():
            raise FileNotFoundError(f"Experiment config not found: {yaml_path}")

        with open(yaml_path, "r") as f:
            data = yaml.safe_load(f)

        if not isinstance(data, dict):
            raise ConfigError(f"Invalid YAML: expected dict, got {type(data)}")

        return cls.model_validate(data)

    @classmethod
    def resolve(cls, name_or_path: str | Path) -> Path:
        """A config path, or the name of a built-in preset in experiment/examples/."""
        path = Path(name_or_path)
        if path.exists():
            return path
        builtin = EXAMPLES_DIR / f"{name_or_path}.yaml"
        if builtin.exists():
            return builtin
        raise FileNotFoundError(f"Experiment config not found: {name_or_path} (also tried {builtin})")

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def run_id(self) -> str:
        """Content hash of the full config (the run seed included)."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def with_value(self, param_path: str, value: ParamValue) -> "ExperimentConfig":
        """Copy with one dotted field replaced; the copy carries no sweep block."""
        data = self.to_dict()
        node, key = _walk(data, param_path)
        node[key] = value
        data["sweep"] = None
        return ExperimentConfig.model_validate(data)

    def sweep_variants(self) -> List["ExperimentConfig"]:
        """One config per sweep value, each named after its position so duplicates stay distinct."""
        if self.sweep is None:
            raise ValueError("config has no sweep block")
        variants = []
        for i, value in enumerate(self.sweep.values):
            variant = self.with_value(self.sweep.param_path, value)
            variants.append(variant.model_copy(update={"name": f"{self.name}[{self.sweep.param_path}={value}#{i}]"}))
        return variants
