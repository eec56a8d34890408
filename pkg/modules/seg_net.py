"""
Segmentation Network - Encoder with a seed decoder and an instance decoder
The seed decoder predicts per-class seed/semantic maps; the instance decoder
predicts the sigma (cluster margin) map and the bounded offset map. Losses:
focal seed loss, Gaussian-MSE seed loss (baseline) and the clustering loss.
"""

import logging
import math
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence as SequenceType, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset

from core.exceptions import ConfigurationError, ContractViolation, PaddingRequiredError
from models.config_models import PasteConfig, SegNetConfig, SegTrainConfig
from models.map_models import DenseMapStack
from models.mots_models import Frame, InstanceMask, InstanceSegmentation

logger = logging.getLogger(__name__)

EPS = 1e-7


# ---------------------------------------------------------------------------
# Input scaling
# ---------------------------------------------------------------------------

def upsample_input(frame: Frame, factor: int) -> Frame:
    """Bilinear up-sampling of a frame; factor 1 returns the frame unchanged"""
    if factor < 1:
        raise ContractViolation(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return frame
    image = torch.from_numpy(frame.image.astype(np.float64)).permute(2, 0, 1)[None]
    scaled = F.interpolate(image, scale_factor=factor, mode="bilinear", align_corners=False)
    array = np.clip(np.rint(scaled[0].permute(1, 2, 0).numpy()), 0, 255).astype(np.uint8)
    return Frame.from_image(frame.sequence_id, frame.frame_index, array)


def upsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor up-sampling; keeps label disjointness"""
    if factor == 1:
        return mask
    return np.repeat(np.repeat(mask, factor, axis=0), factor, axis=1)


def upsample_annotations(instances: List[InstanceMask], factor: int) -> List[InstanceMask]:
    return [inst.model_copy(update={"mask": upsample_mask(inst.mask, factor)}) for inst in instances]


def downsample_instances(instances: List[InstanceMask], factor: int, min_pixels: int = 1) -> List[InstanceMask]:
    """
    Bring masks predicted at up-sampled resolution back to the input size.
    Each factor x factor block takes its most frequent label (background wins ties),
    so the output stays disjoint.
    """
    if factor == 1 or not instances:
        return list(instances)
    height, width = instances[0].shape
    counts = np.zeros((len(instances) + 1, height // factor, width // factor), dtype=np.int32)
    covered = np.zeros((height, width), dtype=bool)
    for index, inst in enumerate(instances, start=1):
        counts[index] = inst.mask.reshape(height // factor, factor, width // factor, factor).sum(axis=(1, 3))
        covered |= inst.mask
    counts[0] = (~covered).reshape(height // factor, factor, width // factor, factor).sum(axis=(1, 3))
    labels = counts.argmax(axis=0)

    result = []
    for index, inst in enumerate(instances, start=1):
        mask = labels == index
        if mask.sum() >= min_pixels:
            result.append(inst.model_copy(update={"mask": mask}))
    return result


def image_to_tensor(image: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """H x W x 3 uint8 -> 3 x H x W, centered around zero"""
    return torch.from_numpy(image.astype(np.float64) / 255.0 - 0.5).permute(2, 0, 1).to(dtype)


# ---------------------------------------------------------------------------
# Targets and map tensors
# ---------------------------------------------------------------------------

class SegTargets(NamedTuple):
    """Rasterized ground truth for one image"""
    instance_map: torch.Tensor   # H x W, 0 = background, k = k-th instance
    class_map: torch.Tensor      # H x W semantic class per pixel
    instance_classes: List[int]  # class of instance k at position k - 1


def targets_from_segmentation(gt: Union[InstanceSegmentation, List[InstanceMask]],
                              height: int, width: int) -> SegTargets:
    instances = gt.instances if isinstance(gt, InstanceSegmentation) else list(gt)
    instance_map = np.zeros((height, width), dtype=np.int64)
    class_map = np.zeros((height, width), dtype=np.int64)
    classes = []
    for index, inst in enumerate(instances, start=1):
        if inst.shape != (height, width):
            raise ContractViolation(f"instance mask {inst.shape} does not match {height}x{width}")
        instance_map[inst.mask] = index
        class_map[inst.mask] = int(inst.class_id)
        classes.append(int(inst.class_id))
    return SegTargets(torch.from_numpy(instance_map), torch.from_numpy(class_map), classes)


def _as_targets(gt, height: int, width: int) -> SegTargets:
    if isinstance(gt, SegTargets):
        return gt
    return targets_from_segmentation(gt, height, width)


def coordinate_tensor(height: int, width: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    ys, xs = torch.meshgrid(torch.arange(height, dtype=dtype), torch.arange(width, dtype=dtype), indexing="ij")
    return torch.stack([xs, ys])


class MapTensors(NamedTuple):
    """Differentiable dense maps; leading batch dimension optional"""
    seed: torch.Tensor
    sigma: torch.Tensor
    offset: torch.Tensor
    embedding: torch.Tensor

    def select(self, index: int) -> "MapTensors":
        return MapTensors(self.seed[index], self.sigma[index], self.offset[index], self.embedding[index])

    @classmethod
    def from_stack(cls, stack: DenseMapStack) -> "MapTensors":
        offset = torch.from_numpy(stack.offset)
        return cls(torch.from_numpy(stack.seed), torch.from_numpy(stack.sigma), offset,
                   coordinate_tensor(stack.height, stack.width, offset.dtype) + offset)

    def to_stack(self, offset_bound: float) -> DenseMapStack:
        return DenseMapStack(seed=self.seed.detach().cpu().numpy(), sigma=self.sigma.detach().cpu().numpy(),
                             offset=self.offset.detach().cpu().numpy(), offset_bound=offset_bound)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def focal_seed_loss(seed: torch.Tensor, gt_class: torch.Tensor, gamma: float) -> torch.Tensor:
    """
    Pixel-mean focal loss over the per-pixel class distribution.

    Args:
        seed: C x H x W class probabilities
        gt_class: H x W true class per pixel
        gamma: modulating factor (0 reduces to cross-entropy)
    """
    if gamma < 0:
        raise ConfigurationError(f"focal gamma must be >= 0, got {gamma}")
    seed = torch.as_tensor(seed)
    gt_class = torch.as_tensor(gt_class, dtype=torch.long)
    p = seed.clamp(EPS, 1.0 - EPS)
    p_t = p.gather(0, gt_class.unsqueeze(0)).squeeze(0)
    return (-(1.0 - p_t) ** gamma * torch.log(p_t)).mean()


def _instance_gaussian(embedding: torch.Tensor, sigma: torch.Tensor, member: torch.Tensor) -> torch.Tensor:
    """phi_k over the whole image for the instance given by a boolean member mask"""
    if not bool(member.any()):
        raise ContractViolation("instance with zero pixels")
    center = embedding[:, member].mean(dim=1)
    margin = sigma[member].mean()
    dist_sq = ((embedding - center[:, None, None]) ** 2).sum(dim=0)
    return torch.exp(-dist_sq / (2.0 * margin ** 2))


def gaussian_seed_loss(seed: torch.Tensor, sigma: torch.Tensor, embedding: torch.Tensor, gt_instances,
                       fg_weight: float = 10.0, bg_weight: float = 1.0) -> torch.Tensor:
    """
    Weighted MSE between the foreground seed channels and Gaussian heat-maps.
    Inside instance k the target of its class channel is phi_k; everywhere else 0.
    The targets are constants, so this loss only trains the seed maps.
    """
    num_fg = seed.shape[0] - 1
    height, width = seed.shape[-2:]
    targets = _as_targets(gt_instances, height, width)

    channel_targets = [torch.zeros_like(seed[0]) for _ in range(num_fg)]
    channel_fg = [torch.zeros((height, width), dtype=torch.bool) for _ in range(num_fg)]
    for k, class_id in enumerate(targets.instance_classes, start=1):
        member = targets.instance_map == k
        phi = _instance_gaussian(embedding, sigma, member).detach()
        channel_targets[class_id - 1] = torch.where(member, phi, channel_targets[class_id - 1])
        channel_fg[class_id - 1] = channel_fg[class_id - 1] | member

    target = torch.stack(channel_targets)
    weight = bg_weight + (fg_weight - bg_weight) * torch.stack(channel_fg).to(seed.dtype)
    return (weight * (seed[1:] - target) ** 2).mean()


def _lovasz_grad(gt_sorted: torch.Tensor) -> torch.Tensor:
    gts = gt_sorted.sum()
    intersection = gts - gt_sorted.cumsum(0)
    union = gts + (1.0 - gt_sorted).cumsum(0)
    jaccard = 1.0 - intersection / union
    if gt_sorted.numel() > 1:
        jaccard[1:] = jaccard[1:] - jaccard[:-1].clone()
    return jaccard


def lovasz_hinge(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Lovasz hinge for one binary mask; logits and labels flattened"""
    signs = 2.0 * labels - 1.0
    errors = 1.0 - logits * signs
    errors_sorted, perm = torch.sort(errors, dim=0, descending=True)
    grad = _lovasz_grad(labels[perm])
    return torch.dot(F.relu(errors_sorted), grad)


def dice_loss(prob: torch.Tensor, labels: torch.Tensor, smooth: float = 1.0) -> torch.Tensor:
    intersection = (prob * labels).sum()
    return 1.0 - (2.0 * intersection + smooth) / (prob.sum() + labels.sum() + smooth)


def instance_cluster_loss(stack: Union[MapTensors, DenseMapStack], gt_instances,
                          mask_loss: str = "dice") -> torch.Tensor:
    """
    Sum over GT instances of a soft-mask loss between phi_k and the GT mask
    plus the sigma uniformity penalty mean((sigma_i - sigma_hat_k)^2).

    Raises:
        ContractViolation: no GT instance, or an instance without pixels
    """
    if isinstance(stack, DenseMapStack):
        stack = MapTensors.from_stack(stack)
    height, width = stack.sigma.shape[-2:]
    targets = _as_targets(gt_instances, height, width)
    if not targets.instance_classes:
        raise ContractViolation("clustering loss needs at least one ground-truth instance")

    total = stack.sigma.new_zeros(())
    for k in range(1, len(targets.instance_classes) + 1):
        member = targets.instance_map == k
        phi = _instance_gaussian(stack.embedding, stack.sigma, member)
        labels = member.to(phi.dtype)
        if mask_loss == "dice":
            total = total + dice_loss(phi.flatten(), labels.flatten())
        elif mask_loss == "lovasz":
            total = total + lovasz_hinge((2.0 * phi - 1.0).flatten(), labels.flatten())
        else:
            raise ConfigurationError(f"unknown mask loss '{mask_loss}'")
        sigma_in = stack.sigma[member]
        total = total + ((sigma_in - sigma_in.mean()) ** 2).mean()
    return total


def segmentation_loss(maps: MapTensors, targets: List[SegTargets], config: SegNetConfig,
                      train_config: Optional[SegTrainConfig] = None) -> torch.Tensor:
    """Batch-mean of the seed loss plus the clustering loss"""
    train_config = train_config or SegTrainConfig()
    losses = []
    for index, target in enumerate(targets):
        item = maps.select(index)
        if config.seed_loss == "focal":
            seed_term = focal_seed_loss(item.seed, target.class_map, config.focal_gamma)
        else:
            seed_term = gaussian_seed_loss(item.seed, item.sigma, item.embedding, target,
                                           config.seed_fg_weight, config.seed_bg_weight)
        loss = train_config.seed_loss_weight * seed_term
        if target.instance_classes:
            loss = loss + train_config.cluster_loss_weight * instance_cluster_loss(item, target, config.mask_loss)
        losses.append(loss)
    return torch.stack(losses).mean()


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

def _groups(channels: int) -> int:
    for groups in (4, 2):
        if channels % groups == 0:
            return groups
    return 1


class ResidualBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.norm1 = nn.GroupNorm(_groups(out_channels), out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.norm2 = nn.GroupNorm(_groups(out_channels), out_channels)
        self.shortcut = None
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.shortcut is None else self.shortcut(x)
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.relu(out + identity)


class Encoder(nn.Module):
    """Stem at full resolution followed by `depth` stride-2 residual stages"""

    def __init__(self, widths: List[int]):
        super().__init__()
        self.stem = ResidualBlock(3, widths[0])
        self.stages = nn.ModuleList(
            ResidualBlock(widths[i], widths[i + 1], stride=2) for i in range(len(widths) - 1)
        )

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        features = [self.stem(x)]
        for stage in self.stages:
            features.append(stage(features[-1]))
        return features


class Decoder(nn.Module):
    """Bilinear up-sampling with skip connections back to full resolution"""

    def __init__(self, widths: List[int], out_channels: int):
        super().__init__()
        depth = len(widths) - 1
        self.blocks = nn.ModuleList(
            ResidualBlock(widths[i + 1] + widths[i], widths[i]) for i in reversed(range(depth))
        )
        self.head = nn.Conv2d(widths[0], out_channels, 1)

    def forward(self, features: List[torch.Tensor]) -> torch.Tensor:
        x = features[-1]
        for level, block in zip(reversed(range(len(features) - 1)), self.blocks):
            skip = features[level]
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = block(torch.cat([x, skip], dim=1))
        return self.head(x)


class SegNet(nn.Module):
    """
    Shared encoder, seed decoder and instance decoder.
    Output ranges are enforced by the activations: softmax/sigmoid on seed,
    exponential on sigma, scaled tanh on offset.
    """

    def __init__(self, config: SegNetConfig):
        super().__init__()
        self.config = config
        widths = [config.base_width * min(2 ** i, 4) for i in range(config.depth + 1)]
        self.encoder = Encoder(widths)
        seed_channels = config.num_classes if config.seed_loss == "focal" else config.num_classes - 1
        self.seed_decoder = Decoder(widths, seed_channels)
        self.inst_decoder = Decoder(widths, 3)

    def forward(self, images: torch.Tensor) -> MapTensors:
        height, width = images.shape[-2:]
        stride = self.config.stride
        if height % stride or width % stride:
            raise PaddingRequiredError(height, width, stride)

        features = self.encoder(images)
        seed_logits = self.seed_decoder(features)
        inst = self.inst_decoder(features)

        if self.config.seed_loss == "focal":
            seed = torch.softmax(seed_logits, dim=1)
        else:
            foreground = torch.sigmoid(seed_logits)
            background = 1.0 - foreground.max(dim=1, keepdim=True).values
            seed = torch.cat([background, foreground], dim=1)

        bound = self.config.resolve_offset_bound(height, width)
        offset = bound * torch.tanh(inst[:, :2])
        sigma = self.config.sigma_init * torch.exp(inst[:, 2].clamp(-10.0, 10.0))
        embedding = coordinate_tensor(height, width, offset.dtype).to(offset.device)[None] + offset
        return MapTensors(seed, sigma, offset, embedding)

    @classmethod
    def from_state_dict(cls, state_dict: Dict[str, torch.Tensor], config: SegNetConfig) -> "SegNet":
        model = cls(config)
        model.load_state_dict(state_dict)
        return model


def forward_segnet(frame: Frame, weights: Union[SegNet, Dict[str, torch.Tensor]],
                   config: SegNetConfig) -> DenseMapStack:
    """
    Run the segmentation network on one frame.

    Raises:
        PaddingRequiredError: frame size not divisible by the encoder stride
    """
    if frame.height % config.stride or frame.width % config.stride:
        raise PaddingRequiredError(frame.height, frame.width, config.stride)
    model = weights if isinstance(weights, SegNet) else SegNet.from_state_dict(weights, config)
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        maps = model(image_to_tensor(frame.image, dtype)[None])
    return maps.select(0).to_stack(config.resolve_offset_bound(frame.height, frame.width))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class SegFrameDataset(Dataset):
    """
    Annotated frames, optionally copy-pasted and up-sampled on the fly.
    Augmentation randomness is keyed by (seed, epoch, index) so any worker
    order yields the same samples.
    """

    def __init__(self, samples: List[Tuple[Frame, List[InstanceMask]]], config: SegNetConfig,
                 paste_config: Optional[PasteConfig] = None, instance_db=None, seed: int = 0):
        self.samples = samples
        self.config = config
        self.paste_config = paste_config
        self.instance_db = instance_db
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, SegTargets]:
        from core.augment import copy_paste

        frame, instances = self.samples[index]
        if self.paste_config is not None and self.instance_db is not None and len(self.instance_db) > 0:
            rng = np.random.default_rng([self.seed, self.epoch, index])
            frame, instances = copy_paste(frame, instances, self.instance_db, self.paste_config, rng)
        factor = self.config.upsample_factor
        frame = upsample_input(frame, factor)
        instances = upsample_annotations(instances, factor)
        return image_to_tensor(frame.image), targets_from_segmentation(instances, frame.height, frame.width)


def collate_seg_batch(batch: List[Tuple[torch.Tensor, SegTargets]]) -> Tuple[torch.Tensor, List[SegTargets]]:
    images, targets = zip(*batch)
    return torch.stack(images), list(targets)


def train_segnet(samples: List[Tuple[Frame, List[InstanceMask]]], config: SegNetConfig,
                 train_config: SegTrainConfig, paste_config: Optional[PasteConfig] = None,
                 instance_db=None,
                 on_epoch: Optional[Callable[[int, float], None]] = None) -> Tuple[SegNet, List[float]]:
    """
    Train the segmentation network with Adam.

    Returns:
        Tuple[SegNet, List[float]]: trained model and mean loss per epoch
    """
    if not samples:
        raise ContractViolation("no training frames")
    torch.manual_seed(train_config.seed)
    model = SegNet(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)

    use_paste = train_config.copy_paste and paste_config is not None
    dataset = SegFrameDataset(samples, config, paste_config if use_paste else None,
                              instance_db if use_paste else None, seed=train_config.seed)
    generator = torch.Generator().manual_seed(train_config.seed)
    loader = DataLoader(dataset, batch_size=train_config.batch_size, shuffle=True,
                        generator=generator, collate_fn=collate_seg_batch, num_workers=0)

    history: List[float] = []
    for epoch in range(train_config.epochs):
        dataset.set_epoch(epoch)
        model.train()
        running, seen = 0.0, 0
        for images, targets in loader:
            maps = model(images)
            loss = segmentation_loss(maps, targets, config, train_config)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            running += loss.item() * len(targets)
            seen += len(targets)
        epoch_loss = running / max(seen, 1)
        history.append(epoch_loss)
        logger.info(f"🧠 seg epoch {epoch + 1}/{train_config.epochs} loss={epoch_loss:.5f}")
        if on_epoch:
            on_epoch(epoch, epoch_loss)
    model.eval()
    return model, history
