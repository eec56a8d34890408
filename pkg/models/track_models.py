"""
Track Models - Online tracker state
"""

from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.mots_models import MAX_TRACK_ID, ClassId


class Track(BaseModel):
    """One live track; age counts frames since the last match"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    track_id: int = Field(gt=0, le=MAX_TRACK_ID)
    class_id: ClassId
    embedding: np.ndarray
    last_frame: int
    age: int = Field(default=0, ge=0)
    history: List[Tuple[int, int]] = Field(default_factory=list, description="(frame_index, instance_id) per match")


class TrackerState(BaseModel):
    tracks: List[Track] = Field(default_factory=list)
    next_id: int = 1
    created: int = Field(default=0, description="Tracks born so far, reused ids included")
    last_frame: Optional[int] = None
    finished: List[int] = Field(default_factory=list, description="Ids of tracks that died, oldest first")


class Assignment(BaseModel):
    """Result of one association round; indices refer to the inputs of associate()"""
    matches: List[Tuple[int, int]] = Field(default_factory=list, description="(track index, detection index)")
    unmatched_tracks: List[int] = Field(default_factory=list)
    unmatched_detections: List[int] = Field(default_factory=list)
