"""
Pipeline - Frame-level glue between the networks, clustering and the tracker
Used by the stage agents and by the CLI sub-commands that run a stage alone.
"""

import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.cluster import cluster_instances
from core.exceptions import DataFormatError
from core.synthetic import load_dataset
from core.tracker import calibrate_max_distance, track_sequence
from models.config_models import PipelineConfig, TrackerParams
from models.mots_models import Frame, InstanceMask, InstanceSegmentation, Sequence
from modules.embed_net import EmbedNet, embed_instances, triplet_accuracy
from modules.seg_net import SegNet, downsample_instances, forward_segnet, upsample_input

logger = logging.getLogger(__name__)

CALIBRATION_FRAMES_PER_SEQUENCE = 8
SPLIT_FILE = "split.json"


def split_sequence_ids(sequence_ids: List[str], held_out: int) -> Tuple[List[str], List[str]]:
    """Last `held_out` sequences (sorted by id) are held out for tracking and evaluation"""
    ordered = sorted(sequence_ids)
    if held_out >= len(ordered):
        raise DataFormatError(f"{len(ordered)} sequences cannot hold out {held_out}")
    return ordered[:-held_out], ordered[-held_out:]


def write_split(data_dir: str, train_ids: List[str], test_ids: List[str]) -> str:
    path = os.path.join(data_dir, SPLIT_FILE)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"train": train_ids, "test": test_ids}, f, indent=2)
    return path


def resolve_split(data_dir: str, held_out: int) -> Tuple[List[str], List[str]]:
    """Split recorded next to the data, or a fresh one from the sequences present"""
    if not os.path.isdir(os.path.join(data_dir, "instances_txt")):
        raise DataFormatError(f"{data_dir} has no instances_txt directory")
    path = os.path.join(data_dir, SPLIT_FILE)
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            split = json.load(f)
        return list(split["train"]), list(split["test"])
    ids = [p.stem for p in Path(data_dir, "instances_txt").glob("*.txt")]
    return split_sequence_ids(ids, held_out)


def load_split(data_dir: str, sequence_ids: List[str]) -> List[Sequence]:
    sequences = load_dataset(data_dir, sequence_ids)
    missing = set(sequence_ids) - {s.sequence_id for s in sequences}
    if missing:
        raise DataFormatError(f"sequences {sorted(missing)} not found under {data_dir}")
    for sequence in sequences:
        if not sequence.frames:
            raise DataFormatError(f"sequence {sequence.sequence_id} has no images")
    return sequences


def training_samples(sequences: List[Sequence]) -> List[Tuple[Frame, List[InstanceMask]]]:
    """(frame, ground-truth instances) for every frame that has an image"""
    return [(frame, sequence.annotations_for(frame.frame_index))
            for sequence in sequences for frame in sequence.frames]


def segment_frame(frame: Frame, seg_model: SegNet, config: PipelineConfig) -> InstanceSegmentation:
    """
    Up-sample, predict the dense maps, cluster and bring the instances back
    to the input resolution.
    """
    factor = config.segnet.upsample_factor
    stack = forward_segnet(upsample_input(frame, factor), seg_model, config.segnet)
    clustered = cluster_instances(stack, config.cluster.for_scale(factor), frame.frame_index)
    instances = downsample_instances(clustered.instances, factor, config.cluster.for_scale(1).min_pixels)
    instances = [inst.model_copy(update={"instance_id": i}) for i, inst in enumerate(instances, start=1)]
    return InstanceSegmentation(frame_index=frame.frame_index, instances=instances)


def embed_segmentation(embed_model: EmbedNet, frame: Frame, segmentation: InstanceSegmentation,
                       config: PipelineConfig) -> List[np.ndarray]:
    bundles = embed_instances(embed_model, frame, segmentation.instances, config.embed, seed=config.seed)
    return [bundle.m for bundle in bundles]


def track_frames(sequence: Sequence, seg_model: SegNet, embed_model: EmbedNet, config: PipelineConfig,
                 params: Optional[TrackerParams] = None) -> Dict[int, List[InstanceMask]]:
    """Run segmentation, embedding and association over every frame of a sequence"""
    params = params or config.tracker
    frame_results = []
    for frame in sequence.frames:
        segmentation = segment_frame(frame, seg_model, config)
        frame_results.append((segmentation, embed_segmentation(embed_model, frame, segmentation, config)))
    tracked = track_sequence(frame_results, params)
    logger.info(f"🧭 sequence {sequence.sequence_id}: "
                f"{sum(len(v) for v in tracked.values())} masks in {len(tracked)} frames")
    return tracked


def ground_truth_embeddings(sequences: List[Sequence], embed_model: EmbedNet, config: PipelineConfig,
                            frames_per_sequence: int = CALIBRATION_FRAMES_PER_SEQUENCE) -> Tuple[np.ndarray, List[int]]:
    """
    Embed ground-truth instances of evenly spaced frames.

    Returns:
        Tuple[np.ndarray, List[int]]: (N, dim) embeddings and one integer
        label per (sequence, class, track)
    """
    vectors, labels = [], []
    label_ids: Dict[Tuple[str, int, int], int] = {}
    for sequence in sequences:
        frames = [f for f in sequence.frames if sequence.annotations_for(f.frame_index)]
        stride = max(1, len(frames) // frames_per_sequence)
        for frame in frames[::stride][:frames_per_sequence]:
            instances = sequence.annotations_for(frame.frame_index)
            bundles = embed_instances(embed_model, frame, instances, config.embed, seed=config.seed)
            for inst, bundle in zip(instances, bundles):
                key = (sequence.sequence_id, int(inst.class_id), inst.track_id)
                vectors.append(bundle.m)
                labels.append(label_ids.setdefault(key, len(label_ids)))
    if not vectors:
        return np.zeros((0, config.embed.embedding_dim)), []
    return np.stack(vectors), labels


def calibrate_gate(sequences: List[Sequence], embed_model: EmbedNet, config: PipelineConfig) -> float:
    """Association gate from training tracks, or the configured one when calibration is off"""
    if not config.tracker.calibrate_gate:
        return config.tracker.max_distance
    embeddings, labels = ground_truth_embeddings(sequences, embed_model, config)
    gate = calibrate_max_distance(embeddings, labels, default=config.tracker.max_distance)
    logger.info(f"🎚️ calibrated association gate: {gate:.4f} from {len(labels)} embeddings")
    return gate


def held_out_triplet_accuracy(sequences: List[Sequence], embed_model: EmbedNet, config: PipelineConfig) -> float:
    embeddings, labels = ground_truth_embeddings(sequences, embed_model, config)
    if len(labels) == 0:
        return 0.0
    return triplet_accuracy(embeddings, labels)
