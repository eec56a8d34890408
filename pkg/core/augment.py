"""
Copy-and-Paste Augmentation - Occlusion-creating pastes of database pedestrians
Donors are matched on lightness, scaled to the host's height and placed so a
bounded fraction of the host is covered; labels are rewritten so every mask
stays disjoint.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field

from core.exceptions import ContractViolation
from models.config_models import PasteConfig
from models.mots_models import BBox, ClassId, Frame, InstanceMask, Sequence

logger = logging.getLogger(__name__)

LUMA = np.array([0.2126, 0.7152, 0.0722])


def relative_lightness(image: np.ndarray, mask: np.ndarray) -> float:
    """Mean relative luminance of the masked pixels, channels scaled to [0, 1]"""
    pixels = image[mask].astype(np.float64) / 255.0
    return float((pixels @ LUMA).mean())


class InstanceEntry(BaseModel):
    """A cut-out instance: patch and mask share the tight box of the source segment"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    patch: np.ndarray = Field(description="h x w x 3 uint8 pixels")
    mask: np.ndarray = Field(description="h x w boolean segment")
    class_id: ClassId
    lightness: float = Field(ge=0, le=1)
    sequence_id: str
    frame_index: int
    track_id: Optional[int] = None


class InstanceDB(BaseModel):
    entries: List[InstanceEntry] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def lightness(self) -> np.ndarray:
        return np.array([entry.lightness for entry in self.entries])


class PasteStats(BaseModel):
    """Running counters across copy_paste calls"""
    hosts: int = 0
    selected: int = 0
    applied: int = 0
    fallbacks: int = 0
    infeasible: int = 0

    @property
    def paste_rate(self) -> float:
        return self.selected / self.hosts if self.hosts else 0.0


def build_instance_db(sequences: List[Sequence], classes: Tuple[ClassId, ...] = (ClassId.PEDESTRIAN,)) -> InstanceDB:
    """One entry per annotated occurrence of the given classes (pedestrians by default)"""
    entries = []
    for sequence in sequences:
        for frame_index in sorted(sequence.annotations):
            frame = sequence.get_frame(frame_index)
            if frame is None:
                continue
            for inst in sequence.annotations[frame_index]:
                if inst.class_id not in classes:
                    continue
                rows, cols = BBox.from_mask(inst.mask).pixel_slices()
                entries.append(InstanceEntry(
                    patch=frame.image[rows, cols].copy(),
                    mask=inst.mask[rows, cols].copy(),
                    class_id=inst.class_id,
                    lightness=relative_lightness(frame.image, inst.mask),
                    sequence_id=sequence.sequence_id,
                    frame_index=frame_index,
                    track_id=inst.track_id,
                ))
    logger.info(f"🗃️ Instance database: {len(entries)} entries from {len(sequences)} sequences")
    return InstanceDB(entries=entries)


def _choose_donor(db: InstanceDB, host_lightness: float, tolerance: float,
                  rng: np.random.Generator) -> Tuple[InstanceEntry, bool]:
    """Random donor within tolerance; nearest lightness otherwise (second value flags the fallback)"""
    diff = np.abs(db.lightness - host_lightness)
    candidates = np.flatnonzero(diff <= tolerance)
    if candidates.size:
        return db.entries[int(candidates[rng.integers(candidates.size)])], False
    return db.entries[int(np.argmin(diff))], True


def _resize(entry: InstanceEntry, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    patch = np.asarray(Image.fromarray(entry.patch).resize((width, height), Image.BILINEAR))
    mask = Image.fromarray(entry.mask.astype(np.uint8) * 255).resize((width, height), Image.NEAREST)
    return patch, np.asarray(mask) > 127


def _place(entry: InstanceEntry, host: np.ndarray, config: PasteConfig,
           rng: np.random.Generator) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Try to put the donor over the host.

    Returns:
        (full-size donor mask, full-size donor pixels) or None when no attempt
        satisfied the scale, in-image and coverage constraints
    """
    image_h, image_w = host.shape
    host_height = BBox.from_mask(host).height
    host_area = host.sum()
    host_ys, host_xs = np.nonzero(host)
    low, high = config.overlap_range

    for _ in range(config.max_attempts):
        ratio = rng.uniform(*config.height_ratio_range)
        target_h = max(1, int(round(host_height * ratio)))
        target_w = max(1, int(round(entry.mask.shape[1] * target_h / entry.mask.shape[0])))
        anchor = rng.integers(host_ys.size)
        if target_h > image_h or target_w > image_w:
            continue
        patch, mask = _resize(entry, target_h, target_w)
        if not mask.any():
            continue
        top = int(host_ys[anchor]) - target_h // 2
        left = int(host_xs[anchor]) - target_w // 2
        if top < 0 or left < 0 or top + target_h > image_h or left + target_w > image_w:
            continue
        full_mask = np.zeros_like(host)
        full_mask[top:top + target_h, left:left + target_w] = mask
        coverage = (full_mask & host).sum() / host_area
        if low <= coverage <= high:
            full_pixels = np.zeros((image_h, image_w, 3), dtype=np.uint8)
            full_pixels[top:top + target_h, left:left + target_w] = patch
            return full_mask, full_pixels
    return None


def copy_paste(frame: Frame, annotations: List[InstanceMask], db: InstanceDB, config: PasteConfig,
               rng: np.random.Generator, stats: Optional[PasteStats] = None) -> Tuple[Frame, List[InstanceMask]]:
    """
    Cover host instances with lightness-matched donors.

    Each host draws once against its class probability (p_car / p_ped). A
    selected host gets a donor whose lightness is within tolerance (nearest
    otherwise, logged), scaled to 0.8-1.25 of the host height and placed so the
    covered fraction of the host lies in overlap_range. The donor becomes a new
    instance, its pixels are removed from every other mask, and modified masks
    left with fewer than min_mask_pixels pixels are dropped.

    Raises:
        ContractViolation: a paste fired but the database is empty
    """
    stats = stats if stats is not None else PasteStats()
    draws = rng.random(len(annotations))
    stats.hosts += len(annotations)

    selected = [
        index for index, inst in enumerate(annotations)
        if draws[index] < (config.p_car if inst.class_id == ClassId.CAR else config.p_ped)
    ]
    stats.selected += len(selected)
    if not selected:
        return frame, list(annotations)
    if len(db) == 0:
        raise ContractViolation("copy-paste selected a host but the instance database is empty")

    image = frame.image.copy()
    masks = [inst.mask.copy() for inst in annotations]
    templates: List[InstanceMask] = list(annotations)
    modified = [False] * len(annotations)
    next_id = max((inst.instance_id for inst in annotations), default=0) + 1

    for host_index in selected:
        host = masks[host_index]
        if not host.any():
            continue
        host_lightness = relative_lightness(image, host)
        donor, fallback = _choose_donor(db, host_lightness, config.lightness_tol, rng)
        if fallback:
            stats.fallbacks += 1
            logger.warning(f"⚠️ frame {frame.frame_index}: no donor within lightness tolerance "
                           f"{config.lightness_tol} of {host_lightness:.3f}; using nearest {donor.lightness:.3f}")
        placed = _place(donor, host, config, rng)
        if placed is None:
            stats.infeasible += 1
            logger.info(f"ℹ️ frame {frame.frame_index}: no feasible placement over instance "
                        f"{templates[host_index].instance_id} after {config.max_attempts} attempts")
            continue

        donor_mask, donor_pixels = placed
        image[donor_mask] = donor_pixels[donor_mask]
        for index, mask in enumerate(masks):
            if (mask & donor_mask).any():
                masks[index] = mask & ~donor_mask
                modified[index] = True
        masks.append(donor_mask)
        templates.append(InstanceMask(mask=donor_mask, class_id=donor.class_id, instance_id=next_id))
        modified.append(False)
        next_id += 1
        stats.applied += 1

    result = []
    for template, mask, changed in zip(templates, masks, modified):
        if not changed:
            result.append(template)
        elif mask.sum() >= config.min_mask_pixels:
            result.append(template.model_copy(update={"mask": mask}))
    return Frame.from_image(frame.sequence_id, frame.frame_index, image), result
