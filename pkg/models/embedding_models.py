"""
Embedding Models - Point clouds fed to the embedding network, its outputs and
the training records kept for the run manifest
"""

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.mots_models import BBox, InstanceMask


class PointCloudPair(BaseModel):
    """
    Foreground and environment clouds of one instance crop.
    fg_points: N_f x 5 (dx, dy, r, g, b); env_points: N_e x (2 + C_cat) (dx, dy, one-hot class).
    Offsets are relative to the enlarged box center, normalized by its size.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    fg_points: np.ndarray
    env_points: np.ndarray
    bbox_vec: np.ndarray = Field(description="(cx/W, cy/H, w/W, h/H) of the enlarged box")
    box: BBox
    env_fallback: bool = Field(default=False, description="Environment sampled from the box border ring")

    @field_validator("fg_points", "env_points", "bbox_vec", mode="before")
    @classmethod
    def _as_float32(cls, value):
        return np.asarray(value, dtype=np.float32)


class EmbeddingBundle(BaseModel):
    """Branch embeddings of one instance; m is their ordered concatenation"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    m_f: np.ndarray
    m_e: np.ndarray
    m_p: np.ndarray
    m_a: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return np.concatenate([self.m_f, self.m_e, self.m_p, self.m_a])

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        return len(self.m_f), len(self.m_e), len(self.m_p), len(self.m_a)


class InstanceCrop(BaseModel):
    """One appearance of a track picked for an embedding batch"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sequence_index: int
    frame_index: int
    instance: InstanceMask


class TrainingBatch(BaseModel):
    """D track ids x 3 equally spaced crops"""
    crops: List[InstanceCrop]
    labels: List[int]
    spacings: List[int] = Field(description="Spacing s drawn for each track, in appearance steps")


class StageRecord(BaseModel):
    name: str
    s: int
    iterations: int
    final_loss: float
    trained_parameters: List[str] = Field(default_factory=list)
    frozen_unchanged: bool = True


class EmbedTrainingReport(BaseModel):
    """What the embedding training actually did, stage by stage"""
    multistage: bool
    s_schedule: List[int] = Field(description="S used by each stage, in execution order")
    stages: List[StageRecord] = Field(default_factory=list)
