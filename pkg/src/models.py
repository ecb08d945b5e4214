"""
Declarative configuration models for ntlbench.

These models describe how an experiment is run: the training schedule, the
network layout, the NTL objective, the training method, augmentations, attacks,
domain shifts and triggers. All models are Pydantic for validation and
serialization, so an experiment is fully captured by one YAML file.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


OutputReg = Literal[
    "max_kl_to_label",
    "min_kl_to_error_label",
    "min_inverse_ce",
    "min_uniform_kl",
    "min_kl_to_style_label",
    "max_kl_to_pseudo_label",
]
FeatureReg = Literal["max_mmd", "domain_confusion", "min_fda"]

# Regularizers the NTL objective maximizes; all others are targeted (minimized) losses.
MAXIMIZED_REGULARIZERS = frozenset({"max_kl_to_label", "max_kl_to_pseudo_label", "max_mmd"})

AugOp = Literal[
    "gaussian_noise",
    "gaussian_blur",
    "solarize",
    "sharpness",
    "color_invert",
    "rotation",
    "contrast",
]
ShiftKind = Literal["rotation", "color_invert", "background_texture", "channel_swap", "corruption"]
Corner = Literal["top_left", "top_right", "bottom_left", "bottom_right"]
MethodName = Literal["sl", "ntl", "cuti_style", "dso", "sophon", "source_only_wrapper"]
AttackFamily = Literal["source_ft", "target_ft", "sfda"]
AttackStrategy = Literal["initFC_all", "initFC_FC", "direct_FC", "direct_all", "transntl", "shot"]

FINETUNE_STRATEGIES = ("initFC_all", "initFC_FC", "direct_FC", "direct_all")

ParamValue = Union[bool, int, float, str]


class RunConfig(BaseModel):
    """Optimization schedule for one training run."""

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    seed: int = Field(0, description="Seed for initialization, shuffling and augmentation")
    epochs: int = Field(10, ge=0, description="Number of passes over the source train split")
    batch_size: int = Field(64, gt=0, description="Mini-batch size per domain")
    learning_rate: float = Field(1e-3, gt=0, description="Optimizer step size")
    optimizer_name: Literal["sgd", "adam"] = Field("adam", description="Optimizer family")
    momentum: float = Field(0.9, ge=0, lt=1, description="SGD momentum (ignored by adam)")
    weight_decay: float = Field(0.0, ge=0, description="L2 penalty")
    lam: Optional[float] = Field(
        None, alias="lambda", ge=0,
        description="Source/target trade-off weight; overrides the objective's lambda when set",
    )
    clamp_bound: Optional[float] = Field(
        None, gt=0, description="Target-term clamp tau; overrides the objective's bound when set"
    )
    device_hint: str = Field("cpu", description="Torch device string")
    progress: bool = Field(False, description="Show tqdm progress bars")


class ArchSpec(BaseModel):
    """
    Declarative network layout: conv blocks for phi, one linear layer for omega.

    Each conv block is conv -> relu -> 2x2 max-pool.
    """

    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(3, gt=0, description="Image channels")
    image_size: int = Field(32, gt=0, description="Square image side length")
    num_classes: int = Field(10, ge=2, description="Size of the shared label space C")
    conv_channels: List[int] = Field([32, 64, 128], description="Output channels per conv block")
    kernel_size: int = Field(3, description="Odd conv kernel size")
    pooling: Literal["flatten", "avg"] = Field(
        "flatten", description="How the last feature map becomes a vector"
    )
    domain_head: bool = Field(False, description="Attach a 2-way auxiliary domain classifier")

    @field_validator("conv_channels")
    @classmethod
    def validate_channels(cls, v: List[int]) -> List[int]:
        if not v or any(c <= 0 for c in v):
            raise ValueError("conv_channels must be a nonempty list of positive integers")
        return v

    @field_validator("kernel_size")
    @classmethod
    def validate_kernel(cls, v: int) -> int:
        if v <= 0 or v % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")
        return v

    @model_validator(mode="after")
    def check_downsampling(self) -> "ArchSpec":
        if self.image_size % (2 ** len(self.conv_channels)) != 0:
            raise ValueError(
                f"image_size {self.image_size} is not divisible by "
                f"2**{len(self.conv_channels)} (one 2x2 pool per block)"
            )
        return self

    @property
    def feature_dim(self) -> int:
        """Dimension d of phi's output."""
        if self.pooling == "avg":
            return self.conv_channels[-1]
        side = self.image_size // (2 ** len(self.conv_channels))
        return self.conv_channels[-1] * side * side

    def layers(self) -> List[Dict[str, Any]]:
        """Layer list describing phi followed by omega (and the optional domain head)."""
        out: List[Dict[str, Any]] = []
        prev = self.in_channels
        for ch in self.conv_channels:
            out.append({"part": "phi", "kind": "conv", "in": prev, "out": ch, "kernel": self.kernel_size})
            out.append({"part": "phi", "kind": "relu"})
            out.append({"part": "phi", "kind": "maxpool", "size": 2})
            prev = ch
        out.append({"part": "phi", "kind": self.pooling})
        out.append({"part": "omega", "kind": "linear", "in": self.feature_dim, "out": self.num_classes})
        if self.domain_head:
            out.append({"part": "aux_domain_head", "kind": "linear", "in": self.feature_dim, "out": 2})
        return out


class ObjectiveSpec(BaseModel):
    """
    Composition of the NTL objective: a source loss minus lambda times the clamped target
    regularizers. No regularizer and lambda = 0 is plain supervised learning.
    """

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    source_loss: Literal["cross_entropy"] = Field("cross_entropy", description="Source-domain loss")
    target_output_reg: Optional[OutputReg] = Field(None, description="Output-space target regularizer")
    target_feature_reg: List[FeatureReg] = Field(
        default_factory=list, description="Feature-space target regularizers (one name or a list)"
    )
    lam: float = Field(1.0, alias="lambda", ge=0, description="Source/target trade-off weight")
    clamp_bound: float = Field(1.0, gt=0, description="Clamp tau for every target term")
    mmd_bandwidth_scales: List[float] = Field(
        [0.25, 0.5, 1.0, 2.0, 4.0], description="Multipliers of the median-heuristic bandwidth"
    )
    weights: Dict[str, float] = Field(
        default_factory=dict, description="Per-regularizer multipliers (default 1.0)"
    )

    @field_validator("target_feature_reg", mode="before")
    @classmethod
    def listify_feature_reg(cls, v: Any) -> Any:
        if v is None:
            return []
        if isinstance(v, str):
            return [v]
        return v

    @field_validator("mmd_bandwidth_scales")
    @classmethod
    def validate_scales(cls, v: List[float]) -> List[float]:
        if not v or any(s <= 0 for s in v):
            raise ValueError("mmd_bandwidth_scales must be a nonempty list of positive reals")
        return v

    @model_validator(mode="after")
    def check_weights(self) -> "ObjectiveSpec":
        active = set(self.regularizers())
        for name, w in self.weights.items():
            if name not in active:
                raise ValueError(f"weight given for inactive regularizer '{name}'")
            if w < 0:
                raise ValueError(f"weight for '{name}' must be nonnegative")
        return self

    def regularizers(self) -> List[str]:
        """Active regularizer names, output-space first."""
        regs: List[str] = []
        if self.target_output_reg is not None:
            regs.append(self.target_output_reg)
        regs.extend(self.target_feature_reg)
        return regs

    def has_regularizer(self) -> bool:
        return bool(self.regularizers())

    def weight(self, name: str) -> float:
        return self.weights.get(name, 1.0)


# Accepted method_params keys and their defaults, per method.
METHOD_PARAMS: Dict[str, Dict[str, ParamValue]] = {
    "sl": {},
    "ntl": {"defense_magnitude": 0.2},
    "cuti_style": {"style_noise_std": 0.5, "defense_magnitude": 0.2},
    "dso": {"perturb_radius": 0.25, "ascent_steps": 3, "random_start": True},
    "sophon": {
        "inner_steps": 3,
        "inner_lr": 0.01,
        "meta_lr": 1e-3,
        "meta_iterations": 20,
        "blocks_per_epoch": 1,
        "second_order": False,
        "risk_loss": "inverse_ce",
    },
    "source_only_wrapper": {
        "aux_strategy": "strong_augment",
        "aux_magnitude": 0.8,
        "aux_ops_per_sample": 2,
        "style_noise_std": 0.5,
        "defense_magnitude": 0.2,
    },
}


class MethodSpec(BaseModel):
    """An NTL method: which pipeline, its objective and its method-specific knobs."""

    model_config = ConfigDict(frozen=True)

    name: MethodName = Field("ntl", description="Training pipeline")
    objective: ObjectiveSpec = Field(default_factory=ObjectiveSpec, description="Objective composition")
    method_params: Dict[str, ParamValue] = Field(
        default_factory=dict, description="Method-specific scalars (see METHOD_PARAMS)"
    )
    defense_consistency_weight: float = Field(
        0.0, ge=0, description="Weight of the TransNTL consistency defense (0 disables)"
    )

    @model_validator(mode="after")
    def check_params(self) -> "MethodSpec":
        allowed = METHOD_PARAMS[self.name]
        unknown = sorted(set(self.method_params) - set(allowed))
        if unknown:
            raise ValueError(
                f"method_params {unknown} not accepted by method '{self.name}' "
                f"(allowed: {sorted(allowed)})"
            )
        return self

    def param(self, key: str) -> ParamValue:
        """Look up a method parameter, falling back to its declared default."""
        if key not in METHOD_PARAMS[self.name]:
            raise KeyError(f"method '{self.name}' has no parameter '{key}'")
        return self.method_params.get(key, METHOD_PARAMS[self.name][key])


class AugmentationSpec(BaseModel):
    """Strong-augmentation recipe used to synthesize auxiliary domains."""

    model_config = ConfigDict(frozen=True)

    ops: List[AugOp] = Field(..., description="Menu of augmentation ops to draw from")
    magnitude: float = Field(0.5, ge=0, le=1, description="Normalized strength for every op")
    ops_per_sample: int = Field(2, gt=0, description="Ops drawn (without replacement) per image")

    @model_validator(mode="after")
    def check_ops(self) -> "AugmentationSpec":
        if not self.ops:
            raise ValueError("ops must be nonempty")
        if self.ops_per_sample > len(self.ops):
            raise ValueError("ops_per_sample exceeds the number of available ops")
        return self


class ShiftSpec(BaseModel):
    """A controlled distribution shift applied to build a target domain."""

    model_config = ConfigDict(frozen=True)

    kind: ShiftKind = Field(..., description="Shift family")
    magnitude: float = Field(..., ge=0, le=1, description="Normalized shift strength")

    def describe(self) -> str:
        return f"{self.kind}@{self.magnitude:g}"


def checkerboard(k: int = 4) -> List[List[float]]:
    return [[float((i + j) % 2) for j in range(k)] for i in range(k)]


class TriggerSpec(BaseModel):
    """An owner-known patch blended into images for OV / AA."""

    model_config = ConfigDict(frozen=True)

    pattern: List[List[Union[float, List[float]]]] = Field(
        default_factory=checkerboard,
        description="k x k patch (broadcast over channels) or k x k x channels values in [0,1]",
    )
    position: Union[Corner, Tuple[int, int]] = Field(
        "bottom_right", description="Corner name or (row, col) of the patch's top-left pixel"
    )
    alpha: float = Field(1.0, gt=0, le=1, description="Blend weight of the patch")

    @field_validator("pattern")
    @classmethod
    def validate_pattern(cls, v: List[List[Any]]) -> List[List[Any]]:
        if not v or not v[0]:
            raise ValueError("pattern must be nonempty")
        width = len(v[0])
        for row in v:
            if len(row) != width:
                raise ValueError("pattern rows must have equal length")
            for px in row:
                values = px if isinstance(px, list) else [px]
                if any(not 0.0 <= float(c) <= 1.0 for c in values):
                    raise ValueError("pattern values must lie in [0, 1]")
        return v


class AttackSpec(BaseModel):
    """One post-training attack of the threat battery."""

    model_config = ConfigDict(frozen=True)

    family: AttackFamily = Field(..., description="Threat family")
    strategy: AttackStrategy = Field(..., description="Attack strategy")
    budget_fraction: float = Field(0.10, gt=0, le=1, description="Fraction of the train split used")
    epochs: int = Field(10, ge=0, description="Attack epochs")
    learning_rate: Optional[float] = Field(
        None, gt=0, description="Attack lr; None means 0.1x the pre-training lr"
    )
    batch_size: Optional[int] = Field(None, gt=0, description="None means the pre-training batch size")
    seed: int = Field(0, description="Seed for subset sampling and optimization")
    perturbation_magnitude: float = Field(
        0.2, gt=0, le=1, description="Magnitude of the TransNTL perturbation set"
    )

    @model_validator(mode="after")
    def check_compatibility(self) -> "AttackSpec":
        allowed = {
            "source_ft": set(FINETUNE_STRATEGIES) | {"transntl"},
            "target_ft": set(FINETUNE_STRATEGIES),
            "sfda": {"shot"},
        }[self.family]
        if self.strategy not in allowed:
            raise ValueError(f"strategy '{self.strategy}' is not valid for family '{self.family}'")
        return self

    @property
    def label(self) -> str:
        return f"{self.family}:{self.strategy}"
