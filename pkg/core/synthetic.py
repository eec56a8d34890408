"""
Synthetic MOTS Generator - Moving textured shapes with exact ground truth
Cars are rectangles, pedestrians are ellipses. Objects move at constant
velocity, bounce off the image border and are drawn far-to-near, so every
occluded pixel belongs to the nearer object.
"""

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np

from core.mots_io import load_mots_sequence, write_mots_sequence
from models.config_models import SyntheticConfig
from models.mots_models import ClassId, Frame, InstanceMask, Sequence

logger = logging.getLogger(__name__)


class _MovingShape:
    """One object: fixed footprint and texture, float position, integer rendering"""

    def __init__(self, track_id: int, class_id: ClassId, config: SyntheticConfig, rng: np.random.Generator):
        self.track_id = track_id
        self.class_id = class_id
        if class_id == ClassId.CAR:
            size = int(rng.integers(config.car_size[0], config.car_size[1] + 1))
            self.height, self.width = max(4, int(round(size * 0.6))), size
            self.footprint = np.ones((self.height, self.width), dtype=bool)
        else:
            size = int(rng.integers(config.pedestrian_size[0], config.pedestrian_size[1] + 1))
            self.height, self.width = size, max(4, int(round(size * 0.45)))
            ys, xs = np.mgrid[0:self.height, 0:self.width]
            ry, rx = self.height / 2.0, self.width / 2.0
            self.footprint = ((ys + 0.5 - ry) / ry) ** 2 + ((xs + 0.5 - rx) / rx) ** 2 <= 1.0
        self.texture = self._texture(config, rng)

        self.x = float(rng.uniform(0, config.image_width - self.width))
        self.y = float(rng.uniform(0, config.image_height - self.height))
        speed = rng.uniform(*config.velocity)
        angle = rng.uniform(0, 2 * np.pi)
        self.vx, self.vy = speed * np.cos(angle), speed * np.sin(angle)

    def _texture(self, config: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
        base = rng.uniform(40, 215, size=3)
        texture = np.broadcast_to(base, (self.height, self.width, 3)).copy()
        if self.class_id == ClassId.PEDESTRIAN:
            # upper and lower body colors
            texture[self.height // 2:] = rng.uniform(40, 215, size=3)
        else:
            texture[:, ::3] *= 0.85
        texture += rng.normal(0, config.texture_noise, size=texture.shape)
        return np.clip(texture, 0, 255)

    def steer_towards(self, other: "_MovingShape"):
        """Aim at another object's current center keeping the speed"""
        dx = (other.x + other.width / 2) - (self.x + self.width / 2)
        dy = (other.y + other.height / 2) - (self.y + self.height / 2)
        norm = np.hypot(dx, dy)
        if norm > 0:
            speed = np.hypot(self.vx, self.vy)
            self.vx, self.vy = speed * dx / norm, speed * dy / norm

    def advance(self, image_width: int, image_height: int):
        self.x += self.vx
        self.y += self.vy
        max_x, max_y = image_width - self.width, image_height - self.height
        if self.x < 0 or self.x > max_x:
            self.vx = -self.vx
            self.x = float(np.clip(self.x, 0, max_x))
        if self.y < 0 or self.y > max_y:
            self.vy = -self.vy
            self.y = float(np.clip(self.y, 0, max_y))

    def placement(self):
        top, left = int(round(self.y)), int(round(self.x))
        return slice(top, top + self.height), slice(left, left + self.width)


def _background(config: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    """Smooth two-color gradient plus fixed noise"""
    start, end = rng.uniform(60, 190, size=3), rng.uniform(60, 190, size=3)
    ramp = np.linspace(0.0, 1.0, config.image_height)[:, None, None]
    image = start + (end - start) * ramp
    image = np.broadcast_to(image, (config.image_height, config.image_width, 3))
    noise = rng.normal(0, config.texture_noise / 2, size=(config.image_height, config.image_width, 3))
    return np.clip(image + noise, 0, 255)


def generate_synthetic_sequence(config: SyntheticConfig) -> Sequence:
    """
    Generate one sequence; the same config always yields a bit-identical result.

    Returns:
        Sequence: frames plus per-frame instances with track ids; object ids
        follow the class * 1000 + track convention
    """
    rng = np.random.default_rng(config.seed)
    background = _background(config, rng)

    count = int(rng.integers(config.object_count[0], config.object_count[1] + 1))
    shapes = []
    for track_id in range(1, count + 1):
        class_id = ClassId.CAR if rng.random() < config.car_fraction else ClassId.PEDESTRIAN
        shapes.append(_MovingShape(track_id, class_id, config, rng))
    depth_order = rng.permutation(count)  # drawn first = farthest

    if count > 1:
        for shape in shapes:
            if rng.random() < config.occlusion_rate:
                target = shapes[int(rng.choice([i for i in range(count) if shapes[i] is not shape]))]
                shape.steer_towards(target)

    logger.debug(f"🎞️ sequence {config.sequence_id}: {count} objects, {config.sequence_length} frames")
    return _render_sequence(config, background, shapes, depth_order)


def _render_sequence(config: SyntheticConfig, background: np.ndarray, shapes: List[_MovingShape],
                     depth_order: np.ndarray) -> Sequence:
    """Draw the shapes far-to-near on every frame and derive the ground truth from the label image"""
    height, width = config.image_height, config.image_width
    frames: List[Frame] = []
    annotations = {}
    for frame_index in range(config.sequence_length):
        image = background.copy()
        labels = np.zeros((height, width), dtype=np.int32)
        for order in depth_order:
            shape = shapes[order]
            rows, cols = shape.placement()
            region = labels[rows, cols]
            region[shape.footprint] = shape.track_id
            image[rows, cols][shape.footprint] = shape.texture[shape.footprint]

        frames.append(Frame.from_image(config.sequence_id, frame_index, np.rint(image).astype(np.uint8)))
        instances = []
        for shape in shapes:
            mask = labels == shape.track_id
            if mask.any():
                instances.append(InstanceMask(mask=mask, class_id=shape.class_id,
                                              instance_id=int(shape.class_id) * 1000 + shape.track_id,
                                              track_id=shape.track_id))
        if instances:
            annotations[frame_index] = instances

        for shape in shapes:
            shape.advance(width, height)

    return Sequence(sequence_id=config.sequence_id, frames=frames, annotations=annotations,
                    height=height, width=width)


def generate_crossing_sequence(config: SyntheticConfig, class_id: ClassId = ClassId.CAR) -> Sequence:
    """
    Two objects of the same class start at opposite image borders and pass
    each other head-on. Their rows are offset by a quarter of the object
    height so the nearer one only partly hides the other while they overlap.
    """
    rng = np.random.default_rng(config.seed)
    background = _background(config, rng)
    shapes = [_MovingShape(track_id, class_id, config, rng) for track_id in (1, 2)]
    travel = max(1, config.sequence_length - 1)
    for shape, (start, direction) in zip(shapes, ((0.0, 1.0), (1.0, -1.0))):
        max_x = config.image_width - shape.width
        shape.x = start * max_x
        shape.y = (config.image_height - shape.height) / 2.0 + direction * shape.height / 8.0
        shape.vx, shape.vy = direction * max_x / travel, 0.0
    logger.debug(f"🎞️ crossing sequence {config.sequence_id}: seed {config.seed}, {config.sequence_length} frames")
    return _render_sequence(config, background, shapes, rng.permutation(2))


def generate_dataset(config: SyntheticConfig, num_sequences: int) -> List[Sequence]:
    """Sequences 0000, 0001, ... each with its own seed derived from config.seed"""
    sequences = []
    for index in range(num_sequences):
        seq_config = config.model_copy(update={"seed": config.seed * 1000 + index, "sequence_id": f"{index:04d}"})
        sequences.append(generate_synthetic_sequence(seq_config))
    logger.info(f"🎞️ Generated {num_sequences} synthetic sequences "
                f"({config.image_height}x{config.image_width}, {config.sequence_length} frames)")
    return sequences


def write_dataset(sequences: List[Sequence], out_dir: str) -> str:
    """KITTI MOTS layout: images/<seq>/%06d.png and instances_txt/<seq>.txt"""
    root = Path(out_dir)
    for sequence in sequences:
        write_mots_sequence(sequence, str(root / "instances_txt" / f"{sequence.sequence_id}.txt"),
                            str(root / "images" / sequence.sequence_id))
    return str(root)


def load_dataset(data_dir: str, sequence_ids: Optional[List[str]] = None) -> List[Sequence]:
    root = Path(data_dir)
    paths = sorted((root / "instances_txt").glob("*.txt"))
    sequences = []
    for path in paths:
        if sequence_ids is not None and path.stem not in sequence_ids:
            continue
        image_dir = root / "images" / path.stem
        sequences.append(load_mots_sequence(str(path), str(image_dir) if image_dir.exists() else None, path.stem))
    return sequences
