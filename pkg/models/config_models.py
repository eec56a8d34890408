"""
Pipeline Configuration Models - Every tunable of the MOTS pipeline
Defaults follow the published experimental setup where one exists; the rest
are desk-scale choices exposed so profiles can override them.
"""

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

EMBED_STAGES = ("m_f", "m_e", "m_p", "m_a")


class SegNetConfig(BaseModel):
    """Segmentation network shape, activations and losses"""
    num_classes: int = Field(default=3, ge=2, description="Seed channels including background")
    focal_gamma: float = Field(default=2.0, description="Focal loss modulating factor")
    seed_fg_weight: float = Field(default=10.0, gt=0)
    seed_bg_weight: float = Field(default=1.0, gt=0)
    upsample_factor: Literal[1, 2] = Field(default=2, description="Input up-sampling before the network")
    offset_bound: Optional[float] = Field(default=None, gt=0, description="Offset magnitude bound in pixels")
    offset_bound_ratio: float = Field(default=0.1, gt=0, description="Bound as a fraction of max(H, W) when offset_bound is unset")
    sigma_init: float = Field(default=4.0, gt=0, description="Initial cluster margin in pixels")
    base_width: int = Field(default=16, ge=4)
    depth: int = Field(default=4, ge=1, le=6, description="Number of stride-2 encoder stages")
    seed_loss: Literal["focal", "gaussian"] = "focal"
    mask_loss: Literal["dice", "lovasz"] = "dice"

    @field_validator("focal_gamma")
    @classmethod
    def _check_gamma(cls, value: float) -> float:
        if value < 0:
            raise ValueError("focal_gamma must be >= 0")
        return value

    @property
    def stride(self) -> int:
        return 2 ** self.depth

    def resolve_offset_bound(self, height: int, width: int) -> float:
        if self.offset_bound is not None:
            return self.offset_bound
        return self.offset_bound_ratio * max(height, width)


class SegTrainConfig(BaseModel):
    """Optimization settings for the segmentation network"""
    epochs: int = Field(default=20, ge=1)
    batch_size: int = Field(default=4, ge=1)
    learning_rate: float = Field(default=5e-4, gt=0)
    seed_loss_weight: float = Field(default=1.0, gt=0)
    cluster_loss_weight: float = Field(default=1.0, gt=0)
    copy_paste: bool = True
    seed: int = 0


class ClusterParams(BaseModel):
    """Inference-time clustering thresholds"""
    seed_threshold: float = Field(default=0.5, gt=0, lt=1)
    assign_threshold: float = Field(default=0.5, gt=0, lt=1)
    min_pixels: int = Field(default=64, ge=1)
    sigma_from: Literal["seed", "mean"] = "seed"

    def for_scale(self, upsample_factor: int) -> "ClusterParams":
        """min_pixels is quoted at 2x input scale; rescale it for another factor"""
        min_pixels = max(1, round(self.min_pixels * upsample_factor ** 2 / 4))
        return self.model_copy(update={"min_pixels": min_pixels})


class EmbedTrainConfig(BaseModel):
    """Embedding network dimensions, sampling and the staged schedule"""
    num_track_ids: int = Field(default=8, ge=2, description="D: track ids per batch")
    crops_per_id: Literal[3] = 3
    s_schedule: Dict[str, int] = Field(default_factory=lambda: {"m_f": 8, "m_e": 2, "m_p": 1, "m_a": 5})
    joint_s: int = Field(default=10, ge=1, description="S for single-stage training")
    stage_order: List[str] = Field(default_factory=lambda: list(EMBED_STAGES))
    multistage: bool = True
    margin: float = Field(default=0.2, gt=0)
    n_fg: int = Field(default=1000, ge=1)
    n_env: int = Field(default=500, ge=1)
    bbox_enlarge: float = Field(default=1.4, ge=1.0)
    num_categories: int = Field(default=3, ge=2, description="One-hot width for environment points")
    dim_f: int = 64
    dim_e: int = 32
    dim_p: int = 32
    dim_a: int = 64
    iterations_per_stage: int = Field(default=200, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    seed: int = 0

    @field_validator("s_schedule")
    @classmethod
    def _check_schedule(cls, value: Dict[str, int]) -> Dict[str, int]:
        missing = set(EMBED_STAGES) - set(value)
        if missing:
            raise ValueError(f"s_schedule lacks stages {sorted(missing)}")
        if any(s < 1 for s in value.values()):
            raise ValueError("every S value must be >= 1")
        return value

    @property
    def embedding_dim(self) -> int:
        return self.dim_f + self.dim_e + self.dim_p + self.dim_a


class PasteConfig(BaseModel):
    """Copy-and-Paste probabilities, lightness tolerance and placement bounds"""
    p_car: float = Field(default=0.2, ge=0, le=1)
    p_ped: float = Field(default=0.5, ge=0, le=1)
    lightness_tol: float = Field(default=0.15, gt=0)
    overlap_range: Tuple[float, float] = (0.2, 0.7)
    height_ratio_range: Tuple[float, float] = (0.8, 1.25)
    max_attempts: int = Field(default=20, ge=1)
    min_mask_pixels: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self):
        low, high = self.overlap_range
        if not 0 <= low <= high <= 1:
            raise ValueError(f"overlap_range {self.overlap_range} must satisfy 0 <= low <= high <= 1")
        low, high = self.height_ratio_range
        if not 0 < low <= high:
            raise ValueError(f"height_ratio_range {self.height_ratio_range} is invalid")
        return self


class TrackerParams(BaseModel):
    """Association gate, track lifetime and template momentum"""
    max_distance: float = Field(default=1.0, gt=0)
    max_age: int = Field(default=30, ge=0)
    momentum: float = Field(default=0.9, ge=0, le=1)
    calibrate_gate: bool = True


class SyntheticConfig(BaseModel):
    """Moving-shape video generator standing in for KITTI MOTS"""
    image_height: int = Field(default=64, ge=16)
    image_width: int = Field(default=64, ge=16)
    object_count: Tuple[int, int] = (2, 4)
    car_fraction: float = Field(default=0.5, ge=0, le=1)
    car_size: Tuple[int, int] = (10, 16)
    pedestrian_size: Tuple[int, int] = (12, 18)
    velocity: Tuple[float, float] = (0.5, 2.0)
    occlusion_rate: float = Field(default=0.3, ge=0, le=1)
    texture_noise: float = Field(default=8.0, ge=0)
    sequence_length: int = Field(default=40, ge=1)
    seed: int = 0
    sequence_id: str = "0000"

    @model_validator(mode="after")
    def _check_ranges(self):
        for name in ("object_count", "car_size", "pedestrian_size", "velocity"):
            low, high = getattr(self, name)
            if low > high or low < 0:
                raise ValueError(f"{name} range {low}..{high} is degenerate")
        if self.object_count[1] < 1:
            raise ValueError("object_count must allow at least one object")
        longest = max(self.car_size[1], self.pedestrian_size[1])
        if longest >= min(self.image_height, self.image_width):
            raise ValueError("objects must fit inside the image")
        return self


class AblationSpec(BaseModel):
    """One row of the ablation table: which of the four modifications are on"""
    two_x: bool = False
    sem: bool = False
    cp: bool = False
    sep: bool = False

    @property
    def label(self) -> str:
        parts = [name for name, on in (("2X", self.two_x), ("Sem", self.sem), ("CP", self.cp), ("Sep", self.sep)) if on]
        return "+".join(parts) if parts else "baseline"


# Cumulative rows in the order the modifications were introduced
ABLATION_ROWS: List[AblationSpec] = [
    AblationSpec(),
    AblationSpec(two_x=True),
    AblationSpec(two_x=True, sem=True),
    AblationSpec(two_x=True, sem=True, cp=True),
    AblationSpec(two_x=True, sem=True, cp=True, sep=True),
]


class PipelineConfig(BaseModel):
    """Complete configuration of one pipeline run"""
    profile: str = "small"
    seed: int = 0
    num_sequences: int = Field(default=20, ge=1)
    held_out_sequences: int = Field(default=4, ge=1)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    segnet: SegNetConfig = Field(default_factory=SegNetConfig)
    seg_train: SegTrainConfig = Field(default_factory=SegTrainConfig)
    cluster: ClusterParams = Field(default_factory=ClusterParams)
    embed: EmbedTrainConfig = Field(default_factory=EmbedTrainConfig)
    paste: PasteConfig = Field(default_factory=PasteConfig)
    tracker: TrackerParams = Field(default_factory=TrackerParams)
    ablation: AblationSpec = Field(default_factory=lambda: AblationSpec(two_x=True, sem=True, cp=True, sep=True))

    @model_validator(mode="after")
    def _check_split(self):
        if self.held_out_sequences >= self.num_sequences:
            raise ValueError("held_out_sequences must leave at least one training sequence")
        return self

    def with_ablation(self, spec: AblationSpec) -> "PipelineConfig":
        """Return a copy whose network/training switches follow an ablation row"""
        segnet = self.segnet.model_copy(update={
            "upsample_factor": 2 if spec.two_x else 1,
            "seed_loss": "focal" if spec.sem else "gaussian",
        })
        seg_train = self.seg_train.model_copy(update={"copy_paste": spec.cp})
        embed = self.embed.model_copy(update={"multistage": spec.sep})
        return self.model_copy(update={
            "segnet": segnet, "seg_train": seg_train, "embed": embed, "ablation": spec,
        })
