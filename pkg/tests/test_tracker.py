import itertools

import numpy as np
import pytest

from core.exceptions import ContractViolation
from core.metrics import evaluate_sequence
from core.mots_io import load_mots_results, write_mots_lines
from core.synthetic import generate_crossing_sequence
from core.tracker import associate, calibrate_max_distance, step, track_sequence
from models.config_models import SyntheticConfig, TrackerParams
from models.mots_models import MAX_TRACK_ID, ClassId, InstanceMask, InstanceSegmentation
from models.track_models import Track, TrackerState
from helpers import rect_mask


def _det(row: int, class_id: ClassId = ClassId.CAR, instance_id: int = 1) -> InstanceMask:
    return InstanceMask(mask=rect_mask(8, 8, slice(row, row + 1), slice(0, 8)), class_id=class_id,
                        instance_id=instance_id)


def _segmentation(frame_index: int, class_ids) -> InstanceSegmentation:
    return InstanceSegmentation(frame_index=frame_index, instances=[
        _det(row, class_id, row + 1) for row, class_id in enumerate(class_ids)
    ])


def _tracks(embeddings: np.ndarray, class_id: ClassId = ClassId.CAR):
    return [Track(track_id=i + 1, class_id=class_id, embedding=e, last_frame=0) for i, e in enumerate(embeddings)]


def _oracle(cost: np.ndarray, gate: float):
    """Most admissible pairs first, then least total distance"""
    if cost.shape[0] > cost.shape[1]:
        key, pairs = _oracle(cost.T, gate)
        return key, sorted((t, d) for d, t in pairs)
    best = None
    n_tracks, n_dets = cost.shape
    for perm in itertools.permutations(range(n_dets), n_tracks):
        pairs = [(t, d) for t, d in enumerate(perm) if cost[t, d] <= gate]
        key = (-len(pairs), sum(cost[t, d] for t, d in pairs))
        if best is None or key < best[0]:
            best = (key, sorted(pairs))
    return best


@pytest.mark.parametrize("gate", [100.0, 2.5, 1.5])
@pytest.mark.parametrize("n_tracks, n_dets", [(5, 5), (1, 6), (6, 1), (2, 5), (5, 3), (6, 6)])
def test_association_matches_exhaustive_search(gate, n_tracks, n_dets):
    rng = np.random.default_rng(int(gate * 10) + 100 * n_tracks + n_dets)
    params = TrackerParams(max_distance=gate)
    for _ in range(20):
        track_emb = rng.normal(size=(n_tracks, 3))
        det_emb = rng.normal(size=(n_dets, 3))
        cost = np.sqrt(((track_emb[:, None] - det_emb[None]) ** 2).sum(-1))
        (neg_count, total), pairs = _oracle(cost, gate)

        detections = [(_det(j, instance_id=j + 1), det_emb[j]) for j in range(n_dets)]
        assignment = associate(_tracks(track_emb), detections, params)
        assert len(assignment.matches) == -neg_count
        assert sum(cost[t, d] for t, d in assignment.matches) == pytest.approx(total, abs=1e-9)
        assert sorted(assignment.matches) == pairs


def test_association_never_crosses_classes():
    tracks = _tracks(np.zeros((1, 2)), ClassId.CAR)
    detections = [(_det(0, ClassId.PEDESTRIAN), np.zeros(2))]
    assignment = associate(tracks, detections, TrackerParams())
    assert assignment.matches == []
    assert assignment.unmatched_tracks == [0] and assignment.unmatched_detections == [0]


def test_association_rejects_mixed_dimensions():
    with pytest.raises(ContractViolation):
        associate(_tracks(np.zeros((1, 2))), [(_det(0), np.zeros(3))], TrackerParams())


def test_step_keeps_ids_and_updates_template_with_momentum():
    params = TrackerParams(max_distance=1.0, momentum=0.9)
    state, ids = step(TrackerState(), (_segmentation(0, [ClassId.CAR]), [np.array([0.0, 0.0])]), params)
    assert ids == [1]
    state, ids = step(state, (_segmentation(1, [ClassId.CAR]), [np.array([0.5, 0.0])]), params)
    assert ids == [1]
    assert np.allclose(state.tracks[0].embedding, [0.05, 0.0])
    assert state.tracks[0].history == [(0, 1), (1, 1)]


def test_step_starts_new_track_beyond_gate():
    params = TrackerParams(max_distance=1.0)
    state, _ = step(TrackerState(), (_segmentation(0, [ClassId.CAR]), [np.zeros(2)]), params)
    state, ids = step(state, (_segmentation(1, [ClassId.CAR]), [np.array([3.0, 0.0])]), params)
    assert ids == [2]
    assert [t.track_id for t in state.tracks] == [1, 2]


def test_tracks_die_after_max_age():
    params = TrackerParams(max_age=2)
    empty = InstanceSegmentation(frame_index=0)
    state, _ = step(TrackerState(), (_segmentation(0, [ClassId.CAR]), [np.zeros(2)]), params)
    for t in (1, 2):
        state, _ = step(state, (empty.model_copy(update={"frame_index": t}), []), params)
    assert [t.track_id for t in state.tracks] == [1]
    state, _ = step(state, (empty.model_copy(update={"frame_index": 3}), []), params)
    assert state.tracks == [] and state.finished == [1]

    # a detection after death starts a new identity
    state, ids = step(state, (_segmentation(4, [ClassId.CAR]), [np.zeros(2)]), params)
    assert ids == [2]


def test_skipped_frames_count_towards_age():
    params = TrackerParams(max_age=2)
    state, _ = step(TrackerState(), (_segmentation(0, [ClassId.CAR]), [np.zeros(2)]), params)
    state, ids = step(state, (_segmentation(10, [ClassId.CAR]), [np.zeros(2)]), params)
    assert ids == [2] and state.finished == [1]


def test_step_input_checks():
    params = TrackerParams()
    state, _ = step(TrackerState(), (_segmentation(3, [ClassId.CAR]), [np.zeros(2)]), params)
    with pytest.raises(ContractViolation):
        step(state, (_segmentation(3, [ClassId.CAR]), [np.zeros(2)]), params)
    with pytest.raises(ContractViolation):
        step(state, (_segmentation(4, [ClassId.CAR]), []), params)


def test_step_does_not_mutate_input_state():
    params = TrackerParams()
    state, _ = step(TrackerState(), (_segmentation(0, [ClassId.CAR]), [np.zeros(2)]), params)
    snapshot = state.model_copy(deep=True)
    step(state, (_segmentation(1, [ClassId.CAR]), [np.array([0.2, 0.0])]), params)
    assert state.last_frame == snapshot.last_frame
    assert np.array_equal(state.tracks[0].embedding, snapshot.tracks[0].embedding)


def _moving_pair(length: int):
    frames = []
    for t in range(length):
        seg = _segmentation(t, [ClassId.CAR, ClassId.PEDESTRIAN])
        frames.append((seg, [np.array([0.0, 0.0]) + 0.01 * t, np.array([5.0, 5.0]) - 0.01 * t]))
    return frames


def test_track_sequence_assigns_object_ids():
    tracked = track_sequence(_moving_pair(6), TrackerParams(max_distance=1.0))
    assert sorted(tracked) == list(range(6))
    for frame_index, instances in tracked.items():
        assert [inst.track_id for inst in instances] == [1, 2]
        assert [inst.object_id for inst in instances] == [1001, 2002]


def test_tracking_is_online():
    params = TrackerParams(max_distance=1.0)
    frames = _moving_pair(8)
    full = track_sequence(frames, params)
    prefix = track_sequence(frames[:4], params)
    for frame_index in prefix:
        assert [i.track_id for i in prefix[frame_index]] == [i.track_id for i in full[frame_index]]


def test_calibrated_gate_separates_tracks():
    rng = np.random.default_rng(3)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    embeddings = np.concatenate([c + rng.normal(0, 0.3, (5, 2)) for c in centers])
    labels = np.repeat([0, 1, 2], 5)
    gate = calibrate_max_distance(embeddings, labels)

    dist = np.sqrt(((embeddings[:, None] - embeddings[None]) ** 2).sum(-1))
    same = labels[:, None] == labels[None]
    assert dist[same].max() < gate < dist[~same].min()


def test_calibration_falls_back_without_negatives():
    assert calibrate_max_distance(np.zeros((3, 2)), [0, 0, 0], default=0.7) == 0.7


def test_track_ids_wrap_around_by_reusing_dead_ids(tmp_path):
    # every frame brings a new identity and the previous one dies at once
    params = TrackerParams(max_distance=1.0, max_age=0)
    frames = [(_segmentation(t, [ClassId.CAR]), [np.array([10.0 * t])]) for t in range(MAX_TRACK_ID + 2)]
    tracked = track_sequence(frames, params)
    ids = [tracked[t][0].track_id for t in range(len(frames))]
    assert ids[:MAX_TRACK_ID] == list(range(1, MAX_TRACK_ID + 1))
    assert ids[MAX_TRACK_ID:] == [1, 2]

    path = write_mots_lines(str(tmp_path / "0000.txt"), tracked)
    loaded = load_mots_results(path)
    assert [loaded[t][0].track_id for t in range(len(frames))] == ids
    assert all(loaded[t][0].object_id < 2000 for t in loaded)


def test_birth_fails_when_every_id_is_alive():
    state = TrackerState(next_id=MAX_TRACK_ID + 1)
    with pytest.raises(ContractViolation):
        step(state, (_segmentation(0, [ClassId.CAR]), [np.zeros(2)]), TrackerParams())


def test_track_id_past_object_id_range_is_rejected():
    with pytest.raises(ValueError):
        InstanceMask(mask=np.ones((2, 2), bool), class_id=ClassId.CAR, instance_id=1, track_id=MAX_TRACK_ID + 1)


def _crossing_frames(sequence, centers: np.ndarray, rng: np.random.Generator):
    """Ground-truth masks as detections, embedded around one center per object"""
    frames = []
    for frame_index in sorted(sequence.annotations):
        gt = sequence.annotations[frame_index]
        instances = [inst.model_copy(update={"track_id": None, "instance_id": i}) for i, inst in enumerate(gt, start=1)]
        embeddings = [centers[inst.track_id - 1] + rng.normal(0, 0.1, centers.shape[1]) for inst in gt]
        frames.append((InstanceSegmentation(frame_index=frame_index, instances=instances), embeddings))
    return frames


def test_identities_survive_a_crossing():
    config = SyntheticConfig(image_height=32, image_width=48, car_size=(8, 12), sequence_length=16)
    preserved = 0
    for seed in range(10):
        sequence = generate_crossing_sequence(config.model_copy(update={"seed": seed}))
        rng = np.random.default_rng(seed)
        centers = rng.normal(0, 2.0, size=(2, 8))
        tracked = track_sequence(_crossing_frames(sequence, centers, rng), TrackerParams(max_distance=1.0))
        report = evaluate_sequence(sequence, tracked)
        preserved += report.overall.ids == 0 and report.overall.tp == report.overall.gt_count
    assert preserved >= 9
