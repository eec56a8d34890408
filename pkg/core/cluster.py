"""
Instance Clustering - Recursive seed-driven grouping of pixels into instances
Both implementations below evaluate the assignment cut in log space,
||e_i - C||^2 < -2 * sigma^2 * ln(assign_threshold), with identical float64
operations so their outputs are bit-for-bit comparable.
"""

import logging
import math
from typing import List

import numpy as np

from models.config_models import ClusterParams
from models.map_models import DenseMapStack
from models.mots_models import ClassId, InstanceMask, InstanceSegmentation

logger = logging.getLogger(__name__)


def _class_membership(seed: np.ndarray) -> np.ndarray:
    """Per-pixel class = argmax over seed channels, lower index wins ties"""
    return seed.argmax(axis=0)


def cluster_instances(stack: DenseMapStack, params: ClusterParams, frame_index: int = 0) -> InstanceSegmentation:
    """
    Group the pixels of each foreground class into instances.

    For every class: repeatedly take the unassigned pixel with the highest seed
    score, stop when it falls below seed_threshold, and claim every unassigned
    pixel of the class whose Gaussian score around that seed's embedding
    exceeds assign_threshold. Clusters under min_pixels are discarded but
    their pixels stay consumed.

    Args:
        stack (DenseMapStack): Seed, sigma and offset maps of one frame
        params (ClusterParams): Thresholds and sigma mode
        frame_index (int): Frame index stamped on the result

    Returns:
        InstanceSegmentation: disjoint instances, ids numbered from 1
    """
    embedding = stack.spatial_embedding().e
    ex, ey = embedding[0].ravel(), embedding[1].ravel()
    sigma = stack.sigma.ravel()
    membership = _class_membership(stack.seed).ravel()
    log_t = math.log(params.assign_threshold)
    height, width = stack.height, stack.width

    instances: List[InstanceMask] = []
    next_id = 1
    for class_index in range(1, stack.num_classes):
        scores = stack.seed[class_index].ravel()
        unassigned = membership == class_index

        while unassigned.any():
            candidates = np.where(unassigned, scores, -np.inf)
            seed_pixel = int(np.argmax(candidates))
            if candidates[seed_pixel] < params.seed_threshold:
                break

            cx, cy = ex[seed_pixel], ey[seed_pixel]
            dx, dy = ex - cx, ey - cy
            dist_sq = dx * dx + dy * dy

            margin = float(sigma[seed_pixel])
            member = unassigned & (dist_sq < -2.0 * margin * margin * log_t)
            member[seed_pixel] = True
            if params.sigma_from == "mean":
                margin = math.fsum(sigma[member].tolist()) / int(member.sum())
                member = unassigned & (dist_sq < -2.0 * margin * margin * log_t)
                member[seed_pixel] = True

            unassigned &= ~member
            count = int(member.sum())
            if count < params.min_pixels:
                logger.debug(f"🔹 class {class_index}: dropped cluster of {count} px")
                continue
            instances.append(InstanceMask(mask=member.reshape(height, width), class_id=ClassId(class_index),
                                          instance_id=next_id))
            next_id += 1

    return InstanceSegmentation(frame_index=frame_index, instances=instances)


def brute_force_cluster_oracle(stack: DenseMapStack, params: ClusterParams,
                               frame_index: int = 0) -> InstanceSegmentation:
    """Pixel-by-pixel scan of the same procedure, no vectorization or index tricks"""
    num_classes, height, width = stack.seed.shape
    embedding = stack.spatial_embedding().e
    log_t = math.log(params.assign_threshold)

    def pixel_class(r: int, q: int) -> int:
        best_class, best_score = 0, float(stack.seed[0, r, q])
        for k in range(1, num_classes):
            if float(stack.seed[k, r, q]) > best_score:
                best_class, best_score = k, float(stack.seed[k, r, q])
        return best_class

    def collect(unassigned, cx: float, cy: float, margin: float, seed_pos):
        limit = -2.0 * margin * margin * log_t
        picked = []
        for r in range(height):
            for q in range(width):
                if not unassigned[r][q]:
                    continue
                dx = float(embedding[0, r, q]) - cx
                dy = float(embedding[1, r, q]) - cy
                if dx * dx + dy * dy < limit or (r, q) == seed_pos:
                    picked.append((r, q))
        return picked

    instances: List[InstanceMask] = []
    next_id = 1
    for class_index in range(1, num_classes):
        unassigned = [[pixel_class(r, q) == class_index for q in range(width)] for r in range(height)]

        while True:
            best_pos, best_score = None, None
            for r in range(height):
                for q in range(width):
                    if unassigned[r][q]:
                        score = float(stack.seed[class_index, r, q])
                        if best_score is None or score > best_score:
                            best_pos, best_score = (r, q), score
            if best_pos is None or best_score < params.seed_threshold:
                break

            cx = float(embedding[0, best_pos[0], best_pos[1]])
            cy = float(embedding[1, best_pos[0], best_pos[1]])
            margin = float(stack.sigma[best_pos])
            picked = collect(unassigned, cx, cy, margin, best_pos)
            if params.sigma_from == "mean":
                margin = math.fsum(float(stack.sigma[p]) for p in picked) / len(picked)
                picked = collect(unassigned, cx, cy, margin, best_pos)

            for r, q in picked:
                unassigned[r][q] = False
            if len(picked) < params.min_pixels:
                continue
            mask = np.zeros((height, width), dtype=bool)
            for r, q in picked:
                mask[r, q] = True
            instances.append(InstanceMask(mask=mask, class_id=ClassId(class_index), instance_id=next_id))
            next_id += 1

    return InstanceSegmentation(frame_index=frame_index, instances=instances)
