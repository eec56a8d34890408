"""
Dense Map Models - Per-pixel outputs of the segmentation network
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def coordinate_grid(height: int, width: int) -> np.ndarray:
    """2 x H x W grid of pixel coordinates (x = column, y = row)"""
    ys, xs = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    return np.stack([xs, ys])


class SpatialEmbedding(BaseModel):
    """e_i = pixel coordinate + predicted offset, in pixels"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    e: np.ndarray = Field(description="2 x H x W embedding (x, y)")


class DenseMapStack(BaseModel):
    """
    Seed, sigma and offset maps for one frame.
    seed: C x H x W in [0, 1]; sigma: H x W > 0; offset: 2 x H x W bounded by offset_bound.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    seed: np.ndarray
    sigma: np.ndarray
    offset: np.ndarray
    offset_bound: float = Field(gt=0)

    @field_validator("seed", "sigma", "offset", mode="before")
    @classmethod
    def _as_float(cls, value):
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.seed.ndim != 3 or self.sigma.ndim != 2 or self.offset.ndim != 3 or self.offset.shape[0] != 2:
            raise ValueError("expected seed C x H x W, sigma H x W, offset 2 x H x W")
        if self.seed.shape[1:] != self.sigma.shape or self.offset.shape[1:] != self.sigma.shape:
            raise ValueError("map sizes disagree")
        if self.seed.min() < 0 or self.seed.max() > 1:
            raise ValueError("seed values must lie in [0, 1]")
        if not (self.sigma > 0).all():
            raise ValueError("sigma must be strictly positive")
        if np.abs(self.offset).max(initial=0.0) > self.offset_bound * (1 + 1e-6):
            raise ValueError(f"offset exceeds bound {self.offset_bound}")
        return self

    @property
    def num_classes(self) -> int:
        return self.seed.shape[0]

    @property
    def height(self) -> int:
        return self.sigma.shape[0]

    @property
    def width(self) -> int:
        return self.sigma.shape[1]

    def spatial_embedding(self) -> SpatialEmbedding:
        return SpatialEmbedding(e=coordinate_grid(self.height, self.width) + self.offset)
