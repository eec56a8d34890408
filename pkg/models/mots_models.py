"""
MOTS Domain Models - Frames, instance masks and sequences
Pydantic models shared by every stage of the pipeline
"""

from enum import IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# KITTI MOTS marks "don't care" regions with this class id
IGNORE_CLASS_ID = 10

# object id = class_id * 1000 + track id, so track ids stay below 1000
MAX_TRACK_ID = 999


class ClassId(IntEnum):
    """Foreground classes annotated in KITTI MOTS"""
    CAR = 1
    PEDESTRIAN = 2


CLASS_NAMES = {ClassId.CAR: "cars", ClassId.PEDESTRIAN: "pedestrians"}


class Frame(BaseModel):
    """
    One RGB video frame.
    The image is an H x W x 3 uint8 array whose size must match height/width.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sequence_id: str = Field(description="Sequence this frame belongs to")
    frame_index: int = Field(ge=0, description="Position of the frame within its sequence")
    image: np.ndarray = Field(description="H x W x 3 uint8 color image")
    height: int = Field(gt=0)
    width: int = Field(gt=0)

    @field_validator("image", mode="before")
    @classmethod
    def _as_uint8_rgb(cls, value):
        image = np.asarray(value)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got shape {image.shape}")
        if image.dtype != np.uint8:
            raise ValueError(f"image must be uint8, got {image.dtype}")
        return image

    @model_validator(mode="after")
    def _check_size(self):
        if self.image.shape[:2] != (self.height, self.width):
            raise ValueError(
                f"image is {self.image.shape[0]}x{self.image.shape[1]} but frame declares {self.height}x{self.width}"
            )
        return self

    @classmethod
    def from_image(cls, sequence_id: str, frame_index: int, image: np.ndarray) -> "Frame":
        """Build a frame taking height/width from the image itself"""
        image = np.asarray(image)
        return cls(sequence_id=sequence_id, frame_index=frame_index, image=image,
                   height=int(image.shape[0]), width=int(image.shape[1]))


class InstanceMask(BaseModel):
    """A single object segment with its class and optional track id"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mask: np.ndarray = Field(description="H x W boolean mask")
    class_id: ClassId
    instance_id: int = Field(gt=0, description="Unique within the frame")
    track_id: Optional[int] = Field(None, gt=0, le=MAX_TRACK_ID)

    @field_validator("mask", mode="before")
    @classmethod
    def _as_bool_mask(cls, value):
        mask = np.asarray(value)
        if mask.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
        mask = mask.astype(bool, copy=False)
        if not mask.any():
            raise ValueError("mask must contain at least one foreground pixel")
        return mask

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def object_id(self) -> int:
        """KITTI MOTS object id: class_id * 1000 + track number"""
        if self.track_id is None:
            raise ValueError("instance has no track id")
        return int(self.class_id) * 1000 + self.track_id


def find_overlap(masks: List[np.ndarray]) -> Optional[Tuple[int, int]]:
    """Return the first pair of overlapping mask indices, or None"""
    if len(masks) < 2:
        return None
    occupied = np.zeros(masks[0].shape, dtype=np.int32)
    for index, mask in enumerate(masks):
        clash = occupied[mask]
        if clash.any():
            return int(clash[clash > 0][0]) - 1, index
        occupied[mask] = index + 1
    return None


class InstanceSegmentation(BaseModel):
    """All instances of one frame; masks are pairwise pixel-disjoint"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frame_index: int = Field(ge=0)
    instances: List[InstanceMask] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_disjoint(self):
        shapes = {inst.shape for inst in self.instances}
        if len(shapes) > 1:
            raise ValueError(f"instances have different mask shapes: {sorted(shapes)}")
        clash = find_overlap([inst.mask for inst in self.instances])
        if clash is not None:
            raise ValueError(f"instances {clash[0]} and {clash[1]} overlap in frame {self.frame_index}")
        return self

    def __len__(self) -> int:
        return len(self.instances)


class BBox(BaseModel):
    """Axis-aligned box in pixel coordinates, max edges exclusive"""
    model_config = ConfigDict(frozen=True)

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _check_order(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")
        return self

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "BBox":
        """Tight box around the foreground pixels of a mask"""
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            raise ValueError("cannot box an empty mask")
        return cls(x_min=float(cols[0]), y_min=float(rows[0]),
                   x_max=float(cols[-1] + 1), y_max=float(rows[-1] + 1))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def enlarge(self, factor: float, image_width: int, image_height: int) -> "BBox":
        """Scale the box about its center and clip it to the image"""
        cx, cy = self.center
        half_w = self.width * factor / 2.0
        half_h = self.height * factor / 2.0
        return BBox(
            x_min=max(0.0, cx - half_w),
            y_min=max(0.0, cy - half_h),
            x_max=min(float(image_width), cx + half_w),
            y_max=min(float(image_height), cy + half_h),
        )

    def pixel_slices(self) -> Tuple[slice, slice]:
        """Row/column slices covering every pixel the box touches"""
        return (slice(int(np.floor(self.y_min)), int(np.ceil(self.y_max))),
                slice(int(np.floor(self.x_min)), int(np.ceil(self.x_max))))


class Sequence(BaseModel):
    """
    A video sequence with per-frame ground truth.
    annotations maps frame index -> instances (track_id set); ignore_regions
    maps frame index -> boolean "don't care" mask.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sequence_id: str
    frames: List[Frame] = Field(default_factory=list)
    annotations: Dict[int, List[InstanceMask]] = Field(default_factory=dict)
    ignore_regions: Dict[int, np.ndarray] = Field(default_factory=dict)
    height: Optional[int] = None
    width: Optional[int] = None

    @model_validator(mode="after")
    def _check_sequence(self):
        indices = [frame.frame_index for frame in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"frames of sequence {self.sequence_id} are not strictly ordered")
        for frame_index, instances in self.annotations.items():
            for inst in instances:
                if inst.track_id is None:
                    raise ValueError(f"frame {frame_index}: annotation without track id")
            clash = find_overlap([inst.mask for inst in instances])
            if clash is not None:
                raise ValueError(f"frame {frame_index}: annotations {clash[0]} and {clash[1]} overlap")
        return self

    def get_frame(self, frame_index: int) -> Optional[Frame]:
        for frame in self.frames:
            if frame.frame_index == frame_index:
                return frame
        return None

    def annotations_for(self, frame_index: int) -> List[InstanceMask]:
        return self.annotations.get(frame_index, [])

    def num_instances(self) -> int:
        return sum(len(instances) for instances in self.annotations.values())

    def track_appearances(self) -> Dict[Tuple[int, int], List[int]]:
        """(class_id, track_id) -> ascending frame indices where the track is visible"""
        tracks: Dict[Tuple[int, int], List[int]] = {}
        for frame_index in sorted(self.annotations):
            for inst in self.annotations[frame_index]:
                tracks.setdefault((int(inst.class_id), inst.track_id), []).append(frame_index)
        return tracks
