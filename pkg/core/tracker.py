"""
Online Tracker - Frame-by-frame association on instance embeddings
Class-gated Hungarian matching with a hard distance gate, momentum template
updates and age-based track death. Output for frame t only depends on frames <= t.
"""

import logging
from typing import Dict, List, Optional, Sequence as SequenceType, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.exceptions import ContractViolation
from models.config_models import TrackerParams
from models.mots_models import MAX_TRACK_ID, InstanceMask, InstanceSegmentation
from models.track_models import Assignment, Track, TrackerState

logger = logging.getLogger(__name__)

Detection = Tuple[InstanceMask, np.ndarray]


def _check_dimensions(tracks: List[Track], detections: SequenceType[Detection]):
    dims = {np.asarray(t.embedding).shape for t in tracks} | {np.asarray(m).shape for _, m in detections}
    if len(dims) > 1:
        raise ContractViolation(f"embedding dimensions disagree: {sorted(dims)}")


def associate(tracks: List[Track], detections: SequenceType[Detection], params: TrackerParams) -> Assignment:
    """
    Minimum-cost matching between tracks and detections of the same class.

    Pairs farther apart than max_distance are forbidden: they get a cost
    larger than any sum of admissible costs, so the solver first maximizes the
    number of admissible pairs and then minimizes their total distance;
    forbidden pairs it still returns are discarded.

    Raises:
        ContractViolation: embeddings of different dimensions
    """
    _check_dimensions(tracks, detections)
    gate = params.max_distance
    matches: List[Tuple[int, int]] = []

    for class_id in sorted({int(t.class_id) for t in tracks} & {int(d[0].class_id) for d in detections}):
        track_idx = [i for i, t in enumerate(tracks) if int(t.class_id) == class_id]
        det_idx = [j for j, (inst, _) in enumerate(detections) if int(inst.class_id) == class_id]
        track_emb = np.stack([np.asarray(tracks[i].embedding, dtype=np.float64) for i in track_idx])
        det_emb = np.stack([np.asarray(detections[j][1], dtype=np.float64) for j in det_idx])
        cost = np.sqrt(((track_emb[:, None, :] - det_emb[None, :, :]) ** 2).sum(-1))

        forbidden = 1.0 + 2.0 * gate * max(len(track_idx), len(det_idx))
        gated = np.where(cost <= gate, cost, forbidden)
        rows, cols = linear_sum_assignment(gated)
        matches.extend((track_idx[r], det_idx[c]) for r, c in zip(rows, cols) if cost[r, c] <= gate)

    matches.sort()
    matched_tracks = {t for t, _ in matches}
    matched_dets = {d for _, d in matches}
    return Assignment(
        matches=matches,
        unmatched_tracks=[i for i in range(len(tracks)) if i not in matched_tracks],
        unmatched_detections=[j for j in range(len(detections)) if j not in matched_dets],
    )


def _allocate_id(state: TrackerState, live: List[Track]) -> int:
    """
    Fresh ids count up to MAX_TRACK_ID; after that the id of the track that
    died longest ago is reused.

    Raises:
        ContractViolation: every id is held by a live track
    """
    if state.next_id <= MAX_TRACK_ID:
        state.next_id += 1
        state.created += 1
        return state.next_id - 1
    held = {t.track_id for t in live}
    for position, track_id in enumerate(state.finished):
        if track_id not in held:
            del state.finished[position]
            state.created += 1
            logger.debug(f"♻️ reusing track id {track_id}")
            return track_id
    raise ContractViolation(f"all {MAX_TRACK_ID} track ids are held by live tracks")


def step(state: TrackerState, frame_result: Tuple[InstanceSegmentation, SequenceType[np.ndarray]],
         params: TrackerParams) -> Tuple[TrackerState, List[int]]:
    """
    Advance the tracker by one frame.

    Args:
        state (TrackerState): State after the previous frame (left untouched)
        frame_result: (segmentation of this frame, embedding m per instance)
        params (TrackerParams): Gate, max_age, momentum

    Returns:
        Tuple[TrackerState, List[int]]: new state and the track id of each instance

    Raises:
        ContractViolation: frame not after the previous one, or embedding count mismatch
    """
    segmentation, embeddings = frame_result
    frame_index = segmentation.frame_index
    if state.last_frame is not None and frame_index <= state.last_frame:
        raise ContractViolation(f"frame {frame_index} presented after frame {state.last_frame}")
    if len(embeddings) != len(segmentation.instances):
        raise ContractViolation(
            f"{len(segmentation.instances)} instances but {len(embeddings)} embeddings in frame {frame_index}"
        )

    state = state.model_copy(deep=True)
    state.last_frame = frame_index

    # Tracks that already outlived max_age across skipped frames
    alive = []
    for track in state.tracks:
        if frame_index - track.last_frame - 1 > params.max_age:
            state.finished.append(track.track_id)
            logger.debug(f"💀 track {track.track_id} died before frame {frame_index}")
        else:
            alive.append(track)
    state.tracks = alive

    detections = list(zip(segmentation.instances, embeddings))
    assignment = associate(state.tracks, detections, params)
    ids = [0] * len(detections)

    for track_pos, det_pos in assignment.matches:
        track = state.tracks[track_pos]
        inst, m = detections[det_pos]
        track.embedding = params.momentum * track.embedding + (1.0 - params.momentum) * np.asarray(m, dtype=np.float64)
        track.last_frame = frame_index
        track.age = 0
        track.history.append((frame_index, inst.instance_id))
        ids[det_pos] = track.track_id

    survivors = [state.tracks[pos] for pos, _ in assignment.matches]
    for track_pos in assignment.unmatched_tracks:
        track = state.tracks[track_pos]
        track.age = frame_index - track.last_frame
        if track.age > params.max_age:
            state.finished.append(track.track_id)
            logger.debug(f"💀 track {track.track_id} died at frame {frame_index} (age {track.age})")
        else:
            survivors.append(track)

    for det_pos in assignment.unmatched_detections:
        inst, m = detections[det_pos]
        track = Track(track_id=_allocate_id(state, survivors), class_id=inst.class_id,
                      embedding=np.asarray(m, dtype=np.float64).copy(),
                      last_frame=frame_index, history=[(frame_index, inst.instance_id)])
        survivors.append(track)
        ids[det_pos] = track.track_id
        logger.debug(f"🐣 track {track.track_id} born at frame {frame_index}")

    state.tracks = sorted(survivors, key=lambda t: t.track_id)
    return state, ids


def track_sequence(frame_results: SequenceType[Tuple[InstanceSegmentation, SequenceType[np.ndarray]]],
                   params: TrackerParams) -> Dict[int, List[InstanceMask]]:
    """Run the tracker over a whole sequence; returns tracked instances per frame"""
    state = TrackerState()
    tracked: Dict[int, List[InstanceMask]] = {}
    for segmentation, embeddings in frame_results:
        state, ids = step(state, (segmentation, embeddings), params)
        tracked[segmentation.frame_index] = [
            inst.model_copy(update={"track_id": track_id, "instance_id": int(inst.class_id) * 1000 + track_id})
            for inst, track_id in zip(segmentation.instances, ids)
        ]
    logger.info(f"🧭 tracked {len(tracked)} frames, {state.created} tracks created")
    return tracked


def calibrate_max_distance(embeddings: np.ndarray, labels: SequenceType[int],
                           default: float = 1.0) -> float:
    """
    Gate that best separates same-track from different-track distances
    (maximum balanced accuracy over midpoints between sorted distances).
    Falls back to `default` without both kinds of pairs.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    dist = np.sqrt(((embeddings[:, None, :] - embeddings[None, :, :]) ** 2).sum(-1))
    upper = np.triu(np.ones_like(dist, dtype=bool), k=1)
    same = (labels[:, None] == labels[None, :]) & upper
    diff = (labels[:, None] != labels[None, :]) & upper
    positives, negatives = np.sort(dist[same]), np.sort(dist[diff])
    if positives.size == 0 or negatives.size == 0:
        return default

    values = np.unique(np.concatenate([positives, negatives]))
    candidates = (values[:-1] + values[1:]) / 2.0 if values.size > 1 else values
    best_gate, best_score = default, -1.0
    for gate in candidates:
        score = (np.searchsorted(positives, gate, side="right") / positives.size
                 + 1.0 - np.searchsorted(negatives, gate, side="right") / negatives.size)
        if score > best_score:
            best_gate, best_score = float(gate), score
    if best_gate <= 0:
        return default
    return best_gate
