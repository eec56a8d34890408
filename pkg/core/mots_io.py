"""
MOTS I/O - Mask arithmetic and KITTI-MOTS text format
RLE strings use the COCO compressed encoding (pycocotools), column-major with
background-first runs, so files interoperate with published ground truth.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from pycocotools import mask as maskUtils

from core.exceptions import AnnotationParseError, ContractViolation, DataFormatError
from models.mots_models import IGNORE_CLASS_ID, ClassId, Frame, InstanceMask, Sequence, find_overlap

logger = logging.getLogger(__name__)

MaskLike = Union[InstanceMask, np.ndarray]


def _as_array(mask: MaskLike) -> np.ndarray:
    if isinstance(mask, InstanceMask):
        return mask.mask
    return np.asarray(mask, dtype=bool)


def mask_iou(a: MaskLike, b: MaskLike) -> float:
    """
    Intersection over union of two masks of identical size.

    Raises:
        ContractViolation: if the masks have different dimensions
    """
    mask_a, mask_b = _as_array(a), _as_array(b)
    if mask_a.shape != mask_b.shape:
        raise ContractViolation(f"mask shapes differ: {mask_a.shape} vs {mask_b.shape}")
    union = np.logical_or(mask_a, mask_b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(mask_a, mask_b).sum()) / float(union)


def mask_to_runs(mask: MaskLike) -> List[int]:
    """Uncompressed run lengths over column-major order, background run first"""
    flat = _as_array(mask).ravel(order="F")
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def runs_to_mask(runs: Iterable[int], height: int, width: int) -> np.ndarray:
    """Inverse of mask_to_runs"""
    flat = np.zeros(height * width, dtype=bool)
    position, value = 0, False
    for run in runs:
        flat[position:position + run] = value
        position += run
        value = not value
    if position != height * width:
        raise DataFormatError(f"runs cover {position} pixels, expected {height * width}")
    return flat.reshape((height, width), order="F")


def encode_rle(mask: MaskLike) -> str:
    """
    Encode a non-empty mask as a COCO compressed RLE string.

    Raises:
        ContractViolation: if the mask has no foreground pixel
    """
    array = _as_array(mask)
    if not array.any():
        raise ContractViolation("cannot encode an all-background mask")
    encoded = maskUtils.encode(np.asfortranarray(array.astype(np.uint8)))
    return encoded["counts"].decode("ascii")


def decode_rle(rle: str, height: int, width: int) -> np.ndarray:
    """Decode a COCO compressed RLE string into an H x W boolean mask"""
    try:
        decoded = maskUtils.decode({"size": [height, width], "counts": rle.encode("ascii")})
    except Exception as e:
        raise DataFormatError(f"invalid RLE string: {e}") from e
    return decoded.astype(bool)


def format_mots_line(frame_index: int, object_id: int, class_id: int, mask: np.ndarray) -> str:
    height, width = mask.shape
    return f"{frame_index} {object_id} {class_id} {height} {width} {encode_rle(mask)}"


def _parse_lines(annotation_path: str) -> Tuple[Dict[int, List[InstanceMask]], Dict[int, np.ndarray], Optional[Tuple[int, int]]]:
    """Parse a KITTI-MOTS text file into per-frame instances and ignore regions"""
    annotations: Dict[int, List[InstanceMask]] = {}
    ignore: Dict[int, np.ndarray] = {}
    size: Optional[Tuple[int, int]] = None

    with open(annotation_path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(" ", 5)
            if len(fields) != 6:
                raise AnnotationParseError(f"expected 6 fields, got {len(fields)}", line_number, annotation_path)
            try:
                frame_index, object_id, class_id, height, width = (int(v) for v in fields[:5])
            except ValueError as e:
                raise AnnotationParseError(f"non-integer field ({e})", line_number, annotation_path) from e
            if frame_index < 0 or height <= 0 or width <= 0:
                raise AnnotationParseError("negative frame index or non-positive image size", line_number, annotation_path)

            if size is None:
                size = (height, width)
            elif size != (height, width):
                raise DataFormatError(
                    f"{annotation_path}:{line_number}: image size {height}x{width} differs from {size[0]}x{size[1]}"
                )

            try:
                mask = decode_rle(fields[5], height, width)
            except DataFormatError as e:
                raise AnnotationParseError(str(e), line_number, annotation_path) from e

            if class_id == IGNORE_CLASS_ID:
                ignore[frame_index] = ignore.get(frame_index, np.zeros((height, width), dtype=bool)) | mask
                continue
            if class_id not in (ClassId.CAR, ClassId.PEDESTRIAN):
                raise AnnotationParseError(f"unknown class id {class_id}", line_number, annotation_path)
            track_id = object_id % 1000
            if track_id == 0 or not mask.any():
                raise AnnotationParseError(f"invalid object {object_id}", line_number, annotation_path)
            if object_id // 1000 != class_id:
                raise AnnotationParseError(f"object {object_id} does not belong to class {class_id}",
                                           line_number, annotation_path)

            annotations.setdefault(frame_index, []).append(
                InstanceMask(mask=mask, class_id=ClassId(class_id), instance_id=object_id, track_id=track_id)
            )

    for frame_index, instances in annotations.items():
        clash = find_overlap([inst.mask for inst in instances])
        if clash is not None:
            raise DataFormatError(
                f"{annotation_path}: frame {frame_index} has overlapping masks "
                f"(objects {instances[clash[0]].instance_id} and {instances[clash[1]].instance_id})"
            )
    return annotations, ignore, size


def load_frames(image_dir: str, sequence_id: str) -> List[Frame]:
    """Load every <frame>.png of a directory as a Frame, ordered by index"""
    frames = []
    paths = sorted(Path(image_dir).glob("*.png"), key=lambda p: int(p.stem))
    for path in paths:
        with Image.open(path) as img:
            image = np.asarray(img.convert("RGB"), dtype=np.uint8)
        frames.append(Frame.from_image(sequence_id, int(path.stem), image))
    return frames


def load_mots_sequence(annotation_path: str, image_dir: Optional[str] = None,
                       sequence_id: Optional[str] = None) -> Sequence:
    """
    Load a KITTI-MOTS annotation file (and optionally its images) as a Sequence.

    Args:
        annotation_path (str): Text file with `frame obj_id class_id h w rle` lines
        image_dir (str): Directory with <frame>.png images (optional)
        sequence_id (str): Defaults to the annotation file stem

    Returns:
        Sequence: decoded masks; class-10 regions kept as ignore regions

    Raises:
        AnnotationParseError: malformed line (with line number)
        DataFormatError: inconsistent image size or overlapping masks
    """
    sequence_id = sequence_id or Path(annotation_path).stem
    annotations, ignore, size = _parse_lines(annotation_path)

    frames = load_frames(image_dir, sequence_id) if image_dir else []
    if frames:
        image_size = (frames[0].height, frames[0].width)
        if any((frame.height, frame.width) != image_size for frame in frames):
            raise DataFormatError(f"{image_dir}: images have inconsistent sizes")
        if size is not None and size != image_size:
            raise DataFormatError(
                f"annotations are {size[0]}x{size[1]} but images are {image_size[0]}x{image_size[1]}"
            )
        size = image_size

    logger.info(f"📂 Loaded sequence {sequence_id}: {len(frames)} frames, "
                f"{sum(len(v) for v in annotations.values())} annotated instances")
    return Sequence(
        sequence_id=sequence_id,
        frames=frames,
        annotations=annotations,
        ignore_regions=ignore,
        height=size[0] if size else None,
        width=size[1] if size else None,
    )


def load_mots_results(result_path: str) -> Dict[int, List[InstanceMask]]:
    """Load a tracker result file (same line format as ground truth)"""
    annotations, _, _ = _parse_lines(result_path)
    return annotations


def write_mots_lines(path: str, frames: Dict[int, List[InstanceMask]],
                     ignore_regions: Optional[Dict[int, np.ndarray]] = None) -> str:
    """Write per-frame tracked instances (and ignore regions) in KITTI-MOTS format"""
    lines = []
    ignore_regions = ignore_regions or {}
    for frame_index in sorted(set(frames) | set(ignore_regions)):
        for inst in frames.get(frame_index, []):
            lines.append(format_mots_line(frame_index, inst.object_id, int(inst.class_id), inst.mask))
        region = ignore_regions.get(frame_index)
        if region is not None and region.any():
            lines.append(format_mots_line(frame_index, IGNORE_CLASS_ID * 1000, IGNORE_CLASS_ID, region))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
    return path


def write_mots_sequence(sequence: Sequence, annotation_path: str, image_dir: Optional[str] = None) -> str:
    """Write a Sequence's ground truth (and images, if image_dir is given)"""
    write_mots_lines(annotation_path, sequence.annotations, sequence.ignore_regions)
    if image_dir:
        Path(image_dir).mkdir(parents=True, exist_ok=True)
        for frame in sequence.frames:
            Image.fromarray(frame.image).save(os.path.join(image_dir, f"{frame.frame_index:06d}.png"))
    return annotation_path
