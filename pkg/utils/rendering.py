"""
Overlay rendering for tracked sequences and copy-paste previews
An overlay only changes pixels inside an instance mask; everything else is
copied from the source frame.
"""

from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from models.mots_models import Frame, InstanceMask

ALPHA = 0.5


def color_for(object_id: int) -> np.ndarray:
    """Stable pseudo-random color per object id"""
    rng = np.random.default_rng(object_id)
    return rng.integers(64, 256, size=3).astype(np.float64)


def overlay_instances(image: np.ndarray, instances: List[InstanceMask], alpha: float = ALPHA) -> np.ndarray:
    """Blend each instance color into its own mask pixels"""
    out = image.astype(np.float64).copy()
    for inst in instances:
        key = inst.object_id if inst.track_id is not None else inst.instance_id
        out[inst.mask] = (1 - alpha) * out[inst.mask] + alpha * color_for(key)
    return np.rint(out).clip(0, 255).astype(np.uint8)


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 2) -> np.ndarray:
    height = max(left.shape[0], right.shape[0])
    canvas = np.zeros((height, left.shape[1] + gap + right.shape[1], 3), dtype=np.uint8)
    canvas[:left.shape[0], :left.shape[1]] = left
    canvas[:right.shape[0], left.shape[1] + gap:] = right
    return canvas


def render_sequence(frames: List[Frame], tracked: Dict[int, List[InstanceMask]], out_dir: str,
                    alpha: float = ALPHA) -> List[str]:
    """One PNG per frame with tracked instances blended in"""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    paths = []
    for frame in frames:
        path = str(Path(out_dir) / f"{frame.frame_index:06d}.png")
        Image.fromarray(overlay_instances(frame.image, tracked.get(frame.frame_index, []), alpha)).save(path)
        paths.append(path)
    return paths


def render_paste_preview(before: Frame, before_instances: List[InstanceMask], after: Frame,
                         after_instances: List[InstanceMask], path: Optional[str] = None) -> np.ndarray:
    """Original and composited frame side by side, each with its labels overlaid"""
    composite = side_by_side(overlay_instances(before.image, before_instances),
                             overlay_instances(after.image, after_instances))
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(composite).save(path)
    return composite
