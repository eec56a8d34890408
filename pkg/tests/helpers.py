"""Small fixture builders shared by the test modules"""

import numpy as np

from models.mots_models import ClassId, Frame, InstanceMask, Sequence


def rect_mask(height: int, width: int, rows: slice, cols: slice) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[rows, cols] = True
    return mask


def instance(mask: np.ndarray, class_id: ClassId = ClassId.CAR, track_id: int = 1,
             instance_id: int = None) -> InstanceMask:
    return InstanceMask(mask=mask, class_id=class_id, track_id=track_id,
                        instance_id=instance_id or int(class_id) * 1000 + track_id)


def sequence_from(frames: dict, sequence_id: str = "0000", height: int = 8, width: int = 8,
                  ignore_regions: dict = None) -> Sequence:
    """Annotation-only sequence from {frame_index: [InstanceMask, ...]}"""
    return Sequence(sequence_id=sequence_id, annotations=frames, ignore_regions=ignore_regions or {},
                    height=height, width=width)


def blank_frame(height: int = 8, width: int = 8, frame_index: int = 0, value: int = 0) -> Frame:
    return Frame.from_image("0000", frame_index, np.full((height, width, 3), value, dtype=np.uint8))
