import numpy as np
import pytest

from core.augment import (
    InstanceDB,
    InstanceEntry,
    PasteStats,
    _place,
    build_instance_db,
    copy_paste,
    relative_lightness,
)
from core.exceptions import ContractViolation
from models.config_models import PasteConfig
from models.mots_models import ClassId, Frame, InstanceSegmentation
from helpers import instance, rect_mask


@pytest.fixture(scope="module")
def pedestrian_db(tiny_sequences) -> InstanceDB:
    return build_instance_db(tiny_sequences)


def _host_frame(value: int = 120, height: int = 32, width: int = 32):
    image = np.full((height, width, 3), value, dtype=np.uint8)
    frame = Frame.from_image("0000", 0, image)
    hosts = [
        instance(rect_mask(height, width, slice(4, 16), slice(3, 9)), ClassId.PEDESTRIAN, 1),
        instance(rect_mask(height, width, slice(18, 30), slice(20, 26)), ClassId.PEDESTRIAN, 2),
        instance(rect_mask(height, width, slice(6, 12), slice(14, 26)), ClassId.CAR, 3),
    ]
    return frame, hosts


def test_database_holds_pedestrians_only(pedestrian_db, tiny_sequences):
    expected = sum(1 for seq in tiny_sequences for insts in seq.annotations.values()
                   for inst in insts if inst.class_id == ClassId.PEDESTRIAN)
    assert len(pedestrian_db) == expected
    for entry in pedestrian_db.entries[:10]:
        assert entry.class_id == ClassId.PEDESTRIAN
        assert entry.patch.shape[:2] == entry.mask.shape
        assert 0.0 <= entry.lightness <= 1.0


def test_zero_probability_is_identity(pedestrian_db, rng):
    frame, hosts = _host_frame()
    config = PasteConfig(p_car=0.0, p_ped=0.0)
    out_frame, out = copy_paste(frame, hosts, pedestrian_db, config, rng)
    assert np.array_equal(out_frame.image, frame.image)
    assert len(out) == len(hosts)
    assert all(np.array_equal(a.mask, b.mask) and a.instance_id == b.instance_id for a, b in zip(out, hosts))


def test_empty_database_with_selected_host_is_an_error(rng):
    frame, hosts = _host_frame()
    with pytest.raises(ContractViolation):
        copy_paste(frame, hosts, InstanceDB(), PasteConfig(p_car=1.0, p_ped=1.0), rng)


def test_pasted_labels_stay_disjoint(pedestrian_db, rng):
    frame, hosts = _host_frame()
    config = PasteConfig(p_car=1.0, p_ped=1.0)
    stats = PasteStats()
    for _ in range(20):
        out_frame, out = copy_paste(frame, hosts, pedestrian_db, config, rng, stats)
        InstanceSegmentation(frame_index=0, instances=out)
        assert out_frame.image.shape == frame.image.shape
        assert len({inst.instance_id for inst in out}) == len(out)
    assert stats.hosts == 60 and stats.selected == 60
    assert stats.applied + stats.infeasible <= 60
    assert stats.applied > 0


def test_paste_pixels_are_removed_from_host_masks(pedestrian_db):
    frame, hosts = _host_frame()
    out_frame, out = copy_paste(frame, hosts, pedestrian_db, PasteConfig(p_car=1.0, p_ped=1.0),
                                np.random.default_rng(5))
    changed = (out_frame.image != frame.image).any(axis=2)
    donors = [inst for inst in out if inst.track_id is None]
    assert donors
    for inst in out:
        if inst.track_id is not None:
            assert not (changed & inst.mask).any()


def test_placement_covers_bounded_fraction_of_host(pedestrian_db):
    rng = np.random.default_rng(6)
    config = PasteConfig()
    host = rect_mask(32, 32, slice(6, 20), slice(10, 16))
    placed_count = 0
    for _ in range(200):
        entry = pedestrian_db.entries[int(rng.integers(len(pedestrian_db)))]
        placed = _place(entry, host, config, rng)
        if placed is None:
            continue
        placed_count += 1
        donor_mask, _ = placed
        coverage = (donor_mask & host).sum() / host.sum()
        assert config.overlap_range[0] <= coverage <= config.overlap_range[1]
    assert placed_count > 0


def test_lightness_mismatch_uses_nearest_donor(rng):
    dark_host = Frame.from_image("0000", 0, np.full((32, 32, 3), 10, dtype=np.uint8))
    bright = np.full((10, 4, 3), 250, dtype=np.uint8)
    entry = InstanceEntry(patch=bright, mask=np.ones((10, 4), bool), class_id=ClassId.PEDESTRIAN,
                          lightness=relative_lightness(bright, np.ones((10, 4), bool)),
                          sequence_id="0000", frame_index=0)
    hosts = [instance(rect_mask(32, 32, slice(8, 20), slice(10, 14)), ClassId.PEDESTRIAN, 1)]
    stats = PasteStats()
    copy_paste(dark_host, hosts, InstanceDB(entries=[entry]), PasteConfig(p_ped=1.0), rng, stats)
    assert stats.fallbacks == 1


@pytest.mark.slow
def test_paste_rate_matches_configured_probabilities(pedestrian_db):
    rng = np.random.default_rng(12)
    frame, hosts = _host_frame()
    pedestrians = [h for h in hosts if h.class_id == ClassId.PEDESTRIAN]
    cars = [h for h in hosts if h.class_id == ClassId.CAR]
    config = PasteConfig(p_car=0.2, p_ped=0.5)

    for group, expected in ((pedestrians, 0.5), (cars, 0.2)):
        stats = PasteStats()
        while stats.hosts < 10000:
            copy_paste(frame, group, pedestrian_db, config, rng, stats)
        assert abs(stats.paste_rate - expected) <= 0.02


@pytest.mark.slow
def test_fuzzed_composites_are_valid_labels(pedestrian_db, tiny_sequences):
    rng = np.random.default_rng(13)
    config = PasteConfig(p_car=0.5, p_ped=0.8)
    frames = [(seq, frame) for seq in tiny_sequences for frame in seq.frames if seq.annotations_for(frame.frame_index)]
    for _ in range(500):
        seq, frame = frames[int(rng.integers(len(frames)))]
        out_frame, out = copy_paste(frame, seq.annotations_for(frame.frame_index), pedestrian_db, config, rng)
        InstanceSegmentation(frame_index=frame.frame_index, instances=out)
        assert all(inst.area >= 1 for inst in out)
        assert out_frame.image.dtype == np.uint8
