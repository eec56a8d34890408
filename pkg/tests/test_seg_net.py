import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from core.exceptions import ConfigurationError, ContractViolation, PaddingRequiredError
from models.config_models import SegNetConfig, SegTrainConfig
from models.mots_models import ClassId, Frame
from modules.seg_net import (
    MapTensors,
    SegNet,
    coordinate_tensor,
    downsample_instances,
    focal_seed_loss,
    forward_segnet,
    gaussian_seed_loss,
    instance_cluster_loss,
    targets_from_segmentation,
    train_segnet,
    upsample_input,
)
from helpers import instance, rect_mask

GRAD_TOLERANCE = dict(eps=1e-6, atol=1e-8, rtol=1e-4)


def test_focal_loss_single_pixel_value():
    seed = torch.tensor([[[0.1]], [[0.9]]], dtype=torch.float64)
    gt = torch.tensor([[1]])
    loss = focal_seed_loss(seed, gt, gamma=2.0)
    assert loss.item() == pytest.approx(1.0536e-3, abs=1e-7)
    assert loss.item() == pytest.approx(0.01 * -math.log(0.9), rel=1e-9)


def test_focal_loss_without_modulation_is_cross_entropy():
    generator = torch.Generator().manual_seed(0)
    logits = torch.randn(3, 5, 6, generator=generator, dtype=torch.float64)
    seed = torch.softmax(logits, dim=0)
    gt = torch.randint(0, 3, (5, 6), generator=generator)
    expected = F.nll_loss(torch.log(seed)[None], gt[None])
    assert abs(focal_seed_loss(seed, gt, gamma=0.0).item() - expected.item()) < 1e-10


def test_focal_loss_rejects_negative_gamma():
    with pytest.raises(ConfigurationError):
        focal_seed_loss(torch.full((2, 1, 1), 0.5), torch.zeros((1, 1), dtype=torch.long), gamma=-1.0)


def test_focal_loss_gradient():
    generator = torch.Generator().manual_seed(1)
    seed = torch.softmax(torch.randn(3, 4, 4, generator=generator, dtype=torch.float64), dim=0)
    seed.requires_grad_(True)
    gt = torch.randint(0, 3, (4, 4), generator=generator)
    assert torch.autograd.gradcheck(lambda s: focal_seed_loss(s, gt, 2.0), (seed,), **GRAD_TOLERANCE)


def _two_instances(height=8, width=8):
    car = instance(rect_mask(height, width, slice(1, 4), slice(1, 4)), ClassId.CAR, 1)
    ped = instance(rect_mask(height, width, slice(5, 8), slice(4, 7)), ClassId.PEDESTRIAN, 1)
    return [car, ped]


def test_gaussian_seed_loss_matches_per_pixel_evaluation():
    rng = np.random.default_rng(3)
    height = width = 8
    seed = rng.uniform(0, 1, (3, height, width))
    sigma = rng.uniform(0.5, 2.0, (height, width))
    offset = rng.uniform(-1, 1, (2, height, width))
    gt = [instance(rect_mask(height, width, slice(2, 6), slice(3, 6)), ClassId.PEDESTRIAN, 1)]

    embedding = coordinate_tensor(height, width, torch.float64) + torch.from_numpy(offset)
    loss = gaussian_seed_loss(torch.from_numpy(seed), torch.from_numpy(sigma), embedding, gt,
                              fg_weight=10.0, bg_weight=1.0).item()

    emb = embedding.numpy()
    member = gt[0].mask
    cx, cy = emb[0][member].mean(), emb[1][member].mean()
    margin = sigma[member].mean()
    total = 0.0
    for channel in (1, 2):
        for r in range(height):
            for q in range(width):
                inside = member[r, q] and channel == int(ClassId.PEDESTRIAN)
                if inside:
                    d2 = (emb[0, r, q] - cx) ** 2 + (emb[1, r, q] - cy) ** 2
                    target, weight = math.exp(-d2 / (2 * margin ** 2)), 10.0
                else:
                    target, weight = 0.0, 1.0
                total += weight * (seed[channel, r, q] - target) ** 2
    assert loss == pytest.approx(total / (2 * height * width), rel=1e-12)


def test_gaussian_seed_loss_gradient():
    generator = torch.Generator().manual_seed(4)
    seed = torch.rand(3, 8, 8, generator=generator, dtype=torch.float64, requires_grad=True)
    sigma = 0.5 + torch.rand(8, 8, generator=generator, dtype=torch.float64)
    offset = torch.rand(2, 8, 8, generator=generator, dtype=torch.float64) - 0.5
    gt = targets_from_segmentation(_two_instances(), 8, 8)
    embedding = coordinate_tensor(8, 8, torch.float64) + offset

    assert torch.autograd.gradcheck(lambda s: gaussian_seed_loss(s, sigma, embedding, gt), (seed,), **GRAD_TOLERANCE)


def test_gaussian_seed_loss_leaves_sigma_and_offset_alone():
    seed = torch.rand(3, 8, 8, dtype=torch.float64, requires_grad=True)
    sigma = torch.full((8, 8), 1.5, dtype=torch.float64, requires_grad=True)
    offset = torch.zeros(2, 8, 8, dtype=torch.float64, requires_grad=True)
    gaussian_seed_loss(seed, sigma, coordinate_tensor(8, 8, torch.float64) + offset, _two_instances()).backward()
    assert seed.grad is not None and seed.grad.abs().sum() > 0
    assert sigma.grad is None and offset.grad is None


def _maps(sigma: torch.Tensor, offset: torch.Tensor) -> MapTensors:
    height, width = sigma.shape
    seed = torch.full((3, height, width), 1.0 / 3, dtype=sigma.dtype)
    return MapTensors(seed, sigma, offset, coordinate_tensor(height, width, sigma.dtype) + offset)


def test_cluster_loss_small_for_offsets_pointing_at_centers():
    height = width = 16
    gt = [
        instance(rect_mask(height, width, slice(2, 6), slice(2, 6)), ClassId.CAR, 1),
        instance(rect_mask(height, width, slice(9, 13), slice(9, 13)), ClassId.CAR, 2),
    ]
    coords = coordinate_tensor(height, width, torch.float64)
    offset = torch.zeros(2, height, width, dtype=torch.float64)
    for inst in gt:
        member = torch.from_numpy(inst.mask)
        center = coords[:, member].mean(dim=1)
        offset[:, member] = center[:, None] - coords[:, member]
    sigma = torch.full((height, width), 0.5, dtype=torch.float64)

    loss = instance_cluster_loss(_maps(sigma, offset), gt).item()
    assert 0.0 <= loss < 0.05


def test_cluster_loss_uniformity_penalty_vanishes_for_constant_sigma():
    gt = _two_instances()
    coords = coordinate_tensor(8, 8, torch.float64)
    offset = torch.zeros(2, 8, 8, dtype=torch.float64)
    loss = instance_cluster_loss(_maps(torch.full((8, 8), 1.5, dtype=torch.float64), offset), gt).item()

    expected = 0.0
    for inst in gt:
        member = inst.mask
        center = coords.numpy()[:, member].mean(axis=1)
        d2 = ((coords.numpy() - center[:, None, None]) ** 2).sum(axis=0)
        phi = np.exp(-d2 / (2 * 1.5 ** 2))
        expected += 1.0 - (2.0 * phi[member].sum() + 1.0) / (phi.sum() + member.sum() + 1.0)
    assert loss == pytest.approx(expected, rel=1e-12)


def test_cluster_loss_gradient():
    generator = torch.Generator().manual_seed(5)
    sigma = (1.0 + torch.rand(8, 8, generator=generator, dtype=torch.float64)).requires_grad_(True)
    offset = (torch.rand(2, 8, 8, generator=generator, dtype=torch.float64) - 0.5).requires_grad_(True)
    gt = targets_from_segmentation(_two_instances(), 8, 8)
    assert torch.autograd.gradcheck(lambda s, o: instance_cluster_loss(_maps(s, o), gt),
                                    (sigma, offset), **GRAD_TOLERANCE)


def test_cluster_loss_needs_an_instance():
    offset = torch.zeros(2, 8, 8, dtype=torch.float64)
    with pytest.raises(ContractViolation):
        instance_cluster_loss(_maps(torch.ones(8, 8, dtype=torch.float64), offset), [])


def _frame(height, width, seed=0):
    image = np.random.default_rng(seed).integers(0, 256, (height, width, 3), dtype=np.uint8)
    return Frame.from_image("0000", 0, image)


def test_forward_segnet_respects_output_ranges():
    config = SegNetConfig(base_width=8, depth=2, offset_bound=3.0)
    torch.manual_seed(0)
    stack = forward_segnet(_frame(16, 24), SegNet(config), config)
    assert stack.seed.shape == (3, 16, 24)
    assert np.allclose(stack.seed.sum(axis=0), 1.0, atol=1e-5)
    assert (stack.sigma > 0).all()
    assert np.abs(stack.offset).max() <= 3.0 + 1e-6


def test_forward_segnet_accepts_a_state_dict():
    config = SegNetConfig(base_width=8, depth=2, seed_loss="gaussian")
    torch.manual_seed(0)
    model = SegNet(config)
    from_model = forward_segnet(_frame(16, 16), model, config)
    from_weights = forward_segnet(_frame(16, 16), model.state_dict(), config)
    assert np.allclose(from_model.seed, from_weights.seed, atol=1e-7)
    assert from_model.seed.shape[0] == 3


def test_forward_segnet_requires_padding():
    config = SegNetConfig(base_width=8, depth=2)
    with pytest.raises(PaddingRequiredError) as info:
        forward_segnet(_frame(18, 16), SegNet(config), config)
    assert info.value.stride == 4


def test_upsample_then_downsample_restores_instances():
    frame = _frame(8, 8)
    doubled = upsample_input(frame, 2)
    assert (doubled.height, doubled.width) == (16, 16)
    assert upsample_input(frame, 1) is frame

    car = instance(np.repeat(np.repeat(rect_mask(8, 8, slice(1, 4), slice(1, 4)), 2, 0), 2, 1), track_id=1)
    restored = downsample_instances([car], 2, min_pixels=1)
    assert np.array_equal(restored[0].mask, rect_mask(8, 8, slice(1, 4), slice(1, 4)))

def test_upsampling_a_constant_image_keeps_it_constant():
    frame = Frame.from_image("0000", 0, np.full((4, 4, 3), 77, dtype=np.uint8))
    doubled = upsample_input(frame, 2)
    assert doubled.image.shape == (8, 8, 3)
    assert (doubled.image == 77).all()



def test_downsample_keeps_masks_disjoint_and_drops_small_ones():
    left = np.zeros((8, 8), bool)
    left[:, :5] = True
    right = np.zeros((8, 8), bool)
    right[:, 5:6] = True
    result = downsample_instances([instance(left, track_id=1), instance(right, track_id=2)], 2, min_pixels=2)
    assert len(result) == 1
    assert result[0].mask.shape == (4, 4)


def test_train_segnet_records_one_loss_per_epoch(tiny_config, tiny_sequences):
    samples = [(frame, tiny_sequences[0].annotations_for(frame.frame_index)) for frame in tiny_sequences[0].frames[:4]]
    epochs = []
    model, history = train_segnet(samples, tiny_config.segnet, SegTrainConfig(epochs=2, batch_size=2, copy_paste=False),
                                  on_epoch=lambda epoch, loss: epochs.append(epoch))
    assert len(history) == 2 and epochs == [0, 1]
    assert all(np.isfinite(history))
    assert isinstance(model, SegNet)


def test_train_segnet_needs_samples(tiny_config):
    with pytest.raises(ContractViolation):
        train_segnet([], tiny_config.segnet, SegTrainConfig())


def test_training_loss_falls_over_the_first_ten_epochs(tiny_config, tiny_sequences):
    samples = [(frame, tiny_sequences[1].annotations_for(frame.frame_index)) for frame in tiny_sequences[1].frames[:4]]
    _, history = train_segnet(samples, tiny_config.segnet,
                              SegTrainConfig(epochs=10, batch_size=4, learning_rate=1e-3, copy_paste=False))
    smoothed = np.convolve(history, np.ones(3) / 3, mode="valid")
    assert all(later < earlier for earlier, later in zip(smoothed, smoothed[1:]))
    assert history[-1] < history[0]
