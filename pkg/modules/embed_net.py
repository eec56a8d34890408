"""
Embedding Network - Point-cloud instance embeddings
Foreground pixels (location + color) and environment pixels (location +
category) are treated as unordered 2D point clouds; a shared per-point MLP
with max-pooling encodes each, an MLP encodes the enlarged box, and a final
MLP aggregates the three. Training is batch-hard triplet loss over
equally spaced crops of the same track, either per branch in stages or jointly.
"""

import logging
from typing import Callable, Dict, Iterable, List, Optional, Sequence as SequenceType, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import ConfigurationError, ContractViolation, MOTSError
from models.config_models import EMBED_STAGES, EmbedTrainConfig
from models.embedding_models import (
    EmbedTrainingReport,
    EmbeddingBundle,
    InstanceCrop,
    PointCloudPair,
    StageRecord,
    TrainingBatch,
)
from models.mots_models import BBox, Frame, InstanceMask, Sequence

logger = logging.getLogger(__name__)

ALL_BRANCHES = frozenset({"f", "e", "p", "a"})
STAGE_BRANCHES = {"m_f": "f", "m_e": "e", "m_p": "p", "m_a": "a"}


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

def _sample(indices: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw; with replacement only when the region is too small"""
    return rng.choice(indices, size=count, replace=len(indices) < count)


def _ring(window: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(window.any(axis=1))
    cols = np.flatnonzero(window.any(axis=0))
    ring = np.zeros_like(window)
    ring[rows[0], cols[0]:cols[-1] + 1] = True
    ring[rows[-1], cols[0]:cols[-1] + 1] = True
    ring[rows[0]:rows[-1] + 1, cols[0]] = True
    ring[rows[0]:rows[-1] + 1, cols[-1]] = True
    return ring


def build_point_clouds(frame: Frame, instance: InstanceMask, config: EmbedTrainConfig,
                       rng: np.random.Generator, category_map: Optional[np.ndarray] = None) -> PointCloudPair:
    """
    Sample the foreground and environment clouds of one instance.

    Args:
        frame (Frame): Image the instance lives in
        instance (InstanceMask): Segment C_s
        config (EmbedTrainConfig): Sample counts, box enlargement, category width
        rng: numpy Generator
        category_map (np.ndarray): Per-pixel class of the segmentation result;
            background everywhere when omitted

    Returns:
        PointCloudPair: env_fallback is set when Ĉ_b \\ C_s was empty
    """
    if instance.shape != (frame.height, frame.width):
        raise ContractViolation(f"mask {instance.shape} does not match frame {frame.height}x{frame.width}")
    height, width = frame.height, frame.width
    box = BBox.from_mask(instance.mask).enlarge(config.bbox_enlarge, width, height)
    cx, cy = box.center

    def offsets(flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        ys, xs = np.divmod(flat, width)
        return ys, xs, np.stack([(xs + 0.5 - cx) / box.width, (ys + 0.5 - cy) / box.height], axis=1)

    fg = _sample(np.flatnonzero(instance.mask), config.n_fg, rng)
    ys, xs, loc = offsets(fg)
    fg_points = np.concatenate([loc, frame.image[ys, xs].astype(np.float64) / 255.0], axis=1)

    window = np.zeros((height, width), dtype=bool)
    window[box.pixel_slices()] = True
    env_region = window & ~instance.mask
    fallback = not env_region.any()
    if fallback:
        logger.warning(f"⚠️ frame {frame.frame_index}: empty environment for instance "
                       f"{instance.instance_id}, sampling the box border ring")
        env_region = _ring(window)

    env = _sample(np.flatnonzero(env_region), config.n_env, rng)
    ys, xs, loc = offsets(env)
    if category_map is None:
        categories = np.zeros(len(env), dtype=np.int64)
    else:
        categories = np.clip(category_map[ys, xs], 0, config.num_categories - 1)
    env_points = np.concatenate([loc, np.eye(config.num_categories)[categories]], axis=1)

    bbox_vec = np.array([cx / width, cy / height, box.width / width, box.height / height])
    return PointCloudPair(fg_points=fg_points, env_points=env_points, bbox_vec=bbox_vec,
                          box=box, env_fallback=fallback)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class PointBranch(nn.Module):
    """Shared per-point MLP (1x1 convolutions) followed by max-pooling over points"""

    def __init__(self, in_dim: int, hidden: Tuple[int, ...], out_dim: int):
        super().__init__()
        layers: List[nn.Module] = []
        width = in_dim
        for h in hidden:
            layers += [nn.Conv1d(width, h, 1), nn.LeakyReLU(0.1)]
            width = h
        layers.append(nn.Conv1d(width, out_dim, 1))
        self.mlp = nn.Sequential(*layers)

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        # points: B x N x D
        return self.mlp(points.transpose(1, 2)).max(dim=2).values


class EmbedNet(nn.Module):
    def __init__(self, config: EmbedTrainConfig):
        super().__init__()
        self.config = config
        self.fg_branch = PointBranch(5, (32, 64), config.dim_f)
        self.env_branch = PointBranch(2 + config.num_categories, (32,), config.dim_e)
        self.pos_branch = nn.Sequential(nn.Linear(4, 32), nn.LeakyReLU(0.1), nn.Linear(32, config.dim_p))
        self.aggregator = nn.Sequential(
            nn.Linear(config.dim_f + config.dim_e + config.dim_p, 64), nn.LeakyReLU(0.1), nn.Linear(64, config.dim_a)
        )

    def branch_modules(self) -> Dict[str, nn.Module]:
        return {"f": self.fg_branch, "e": self.env_branch, "p": self.pos_branch, "a": self.aggregator}

    def forward(self, fg: torch.Tensor, env: torch.Tensor, bbox: torch.Tensor,
                active: Iterable[str] = ALL_BRANCHES) -> Dict[str, torch.Tensor]:
        """Inactive branches emit zeros of their output width"""
        active = set(active)
        batch = fg.shape[0]
        zeros = lambda dim: fg.new_zeros((batch, dim))
        m_f = self.fg_branch(fg) if "f" in active else zeros(self.config.dim_f)
        m_e = self.env_branch(env) if "e" in active else zeros(self.config.dim_e)
        m_p = self.pos_branch(bbox) if "p" in active else zeros(self.config.dim_p)
        m_a = self.aggregator(torch.cat([m_f, m_e, m_p], dim=1)) if "a" in active else zeros(self.config.dim_a)
        return {"m_f": m_f, "m_e": m_e, "m_p": m_p, "m_a": m_a, "m": torch.cat([m_f, m_e, m_p, m_a], dim=1)}

    @classmethod
    def from_state_dict(cls, state_dict: Dict[str, torch.Tensor], config: EmbedTrainConfig) -> "EmbedNet":
        model = cls(config)
        model.load_state_dict(state_dict)
        return model


def pairs_to_tensors(pairs: SequenceType[PointCloudPair],
                     dtype: torch.dtype = torch.float32) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    fg = torch.from_numpy(np.stack([p.fg_points for p in pairs])).to(dtype)
    env = torch.from_numpy(np.stack([p.env_points for p in pairs])).to(dtype)
    bbox = torch.from_numpy(np.stack([p.bbox_vec for p in pairs])).to(dtype)
    return fg, env, bbox


def forward_embed(pair: PointCloudPair, weights: Union[EmbedNet, Dict[str, torch.Tensor]],
                  active_branches: Iterable[str] = ALL_BRANCHES,
                  config: Optional[EmbedTrainConfig] = None) -> EmbeddingBundle:
    """Embed one instance; pass config when weights is a bare state dict"""
    if isinstance(weights, EmbedNet):
        model = weights
    else:
        if config is None:
            raise ConfigurationError("a state dict needs the EmbedTrainConfig it was trained with")
        model = EmbedNet.from_state_dict(weights, config)
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        out = model(*pairs_to_tensors([pair], dtype), active=active_branches)
    return EmbeddingBundle(**{key: out[key][0].cpu().numpy() for key in ("m_f", "m_e", "m_p", "m_a")})


def embed_instances(model: EmbedNet, frame: Frame, instances: List[InstanceMask], config: EmbedTrainConfig,
                    seed: int = 0) -> List[EmbeddingBundle]:
    """Embed every instance of a frame; point sampling keyed by (seed, frame index)"""
    if not instances:
        return []
    rng = np.random.default_rng([seed, frame.frame_index])
    categories = np.zeros((frame.height, frame.width), dtype=np.int64)
    for inst in instances:
        categories[inst.mask] = int(inst.class_id)
    pairs = [build_point_clouds(frame, inst, config, rng, categories) for inst in instances]
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        out = model(*pairs_to_tensors(pairs, dtype))
    return [
        EmbeddingBundle(**{key: out[key][i].cpu().numpy() for key in ("m_f", "m_e", "m_p", "m_a")})
        for i in range(len(pairs))
    ]


# ---------------------------------------------------------------------------
# Batches and loss
# ---------------------------------------------------------------------------

def _eligible_tracks(seq_db: List[Sequence]) -> List[Tuple[int, Tuple[int, int], List[int]]]:
    tracks = []
    for seq_index, sequence in enumerate(seq_db):
        for key, appearances in sorted(sequence.track_appearances().items()):
            if len(appearances) >= 3:
                tracks.append((seq_index, key, appearances))
    return tracks


def sample_training_batch(seq_db: List[Sequence], D: int, S: int, rng: np.random.Generator) -> TrainingBatch:
    """
    Draw D distinct tracks with three equally spaced crops each.
    Spacing s ~ U{1..S} counts steps through the track's appearances and is
    capped so three crops fit; tracks with fewer than three appearances are skipped.
    """
    if S < 1:
        raise ConfigurationError(f"S must be >= 1, got {S}")
    tracks = _eligible_tracks(seq_db)
    if len(tracks) < 2:
        raise ContractViolation(f"need at least 2 tracks with 3 appearances, found {len(tracks)}")
    chosen = rng.choice(len(tracks), size=min(D, len(tracks)), replace=False)

    crops: List[InstanceCrop] = []
    labels: List[int] = []
    spacings: List[int] = []
    for label in chosen:
        seq_index, (class_id, track_id), appearances = tracks[int(label)]
        spacing = min(int(rng.integers(1, S + 1)), (len(appearances) - 1) // 2)
        anchor = int(rng.integers(0, len(appearances) - 2 * spacing))
        sequence = seq_db[seq_index]
        for step in range(3):
            frame_index = appearances[anchor + step * spacing]
            instance = next(inst for inst in sequence.annotations_for(frame_index)
                            if int(inst.class_id) == class_id and inst.track_id == track_id)
            crops.append(InstanceCrop(sequence_index=seq_index, frame_index=frame_index, instance=instance))
            labels.append(int(label))
        spacings.append(spacing)
    return TrainingBatch(crops=crops, labels=labels, spacings=spacings)


def _pairwise_distances(embeddings: torch.Tensor) -> torch.Tensor:
    diff = embeddings[:, None, :] - embeddings[None, :, :]
    return diff.pow(2).sum(dim=-1).clamp_min(1e-12).sqrt()


def embedding_loss(embeddings: torch.Tensor, labels, margin: float) -> torch.Tensor:
    """
    Batch-hard triplet loss: mean over anchors of
    max(0, farthest positive - nearest negative + margin). The anchor counts
    among its own positives.

    Raises:
        ContractViolation: fewer than two distinct labels
    """
    labels = torch.as_tensor(labels)
    if labels.unique().numel() < 2:
        raise ContractViolation("triplet loss needs at least two distinct labels")
    dist = _pairwise_distances(embeddings)
    same = labels[:, None] == labels[None, :]
    hardest_pos = dist.masked_fill(~same, float("-inf")).max(dim=1).values
    hardest_neg = dist.masked_fill(same, float("inf")).min(dim=1).values
    return F.relu(hardest_pos - hardest_neg + margin).mean()


def triplet_accuracy(embeddings: np.ndarray, labels: SequenceType[int]) -> float:
    """Fraction of (anchor, positive, negative) triplets with d(a, p) < d(a, n)"""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    dist = np.sqrt(((embeddings[:, None, :] - embeddings[None, :, :]) ** 2).sum(-1))
    same = labels[:, None] == labels[None, :]
    positive = same & ~np.eye(len(labels), dtype=bool)
    correct, total = 0, 0
    for anchor in range(len(labels)):
        pos = dist[anchor, positive[anchor]]
        neg = dist[anchor, ~same[anchor]]
        if pos.size == 0 or neg.size == 0:
            continue
        correct += int((pos[:, None] < neg[None, :]).sum())
        total += pos.size * neg.size
    return correct / total if total else 0.0


def batch_point_clouds(seq_db: List[Sequence], batch: TrainingBatch, config: EmbedTrainConfig,
                       rng: np.random.Generator) -> List[PointCloudPair]:
    """Point clouds of every crop; environment categories come from the annotations"""
    pairs = []
    for crop in batch.crops:
        sequence = seq_db[crop.sequence_index]
        frame = sequence.get_frame(crop.frame_index)
        if frame is None:
            raise ContractViolation(f"sequence {sequence.sequence_id} has no image for frame {crop.frame_index}")
        categories = np.zeros((frame.height, frame.width), dtype=np.int64)
        for inst in sequence.annotations_for(crop.frame_index):
            categories[inst.mask] = int(inst.class_id)
        pairs.append(build_point_clouds(frame, crop.instance, config, rng, categories))
    return pairs


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def validate_stage_order(stage_order: List[str]):
    """All four stages exactly once with the aggregation stage last"""
    if sorted(stage_order) != sorted(EMBED_STAGES) or stage_order[-1] != "m_a":
        raise ConfigurationError(
            f"stage order {stage_order} invalid: need each of {list(EMBED_STAGES)} once, ending with m_a"
        )


def _snapshot(module: nn.Module) -> Dict[str, torch.Tensor]:
    return {name: param.detach().clone() for name, param in module.named_parameters()}


def _train_stage(model: EmbedNet, seq_db: List[Sequence], config: EmbedTrainConfig, name: str, s: int,
                 active: Iterable[str], output_key: str, parameters: List[nn.Parameter],
                 rng: np.random.Generator) -> float:
    optimizer = torch.optim.Adam(parameters, lr=config.learning_rate)
    model.train()
    loss_value = float("nan")
    for iteration in range(config.iterations_per_stage):
        batch = sample_training_batch(seq_db, config.num_track_ids, s, rng)
        pairs = batch_point_clouds(seq_db, batch, config, rng)
        out = model(*pairs_to_tensors(pairs), active=active)
        loss = embedding_loss(out[output_key], batch.labels, config.margin)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        loss_value = loss.item()
        if (iteration + 1) % max(1, config.iterations_per_stage // 5) == 0:
            logger.info(f"🧠 embed stage {name} (S={s}) iter {iteration + 1}/{config.iterations_per_stage} "
                        f"loss={loss_value:.5f}")
    model.eval()
    return loss_value


def run_multistage_training(seq_db: List[Sequence], config: EmbedTrainConfig,
                            on_stage: Optional[Callable[[StageRecord], None]] = None) -> Tuple[EmbedNet, EmbedTrainingReport]:
    """
    Train the embedding network.

    Multi-stage: each branch alone with its own S, then the aggregation MLP
    with every branch frozen; the frozen parameters are compared bitwise
    before and after the last stage. Single-stage: all branches jointly on m
    with S = joint_s.

    Returns:
        Tuple[EmbedNet, EmbedTrainingReport]

    Raises:
        ConfigurationError: invalid stage order
        MOTSError: a frozen parameter changed during the aggregation stage
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = EmbedNet(config)
    branches = model.branch_modules()

    if not config.multistage:
        loss = _train_stage(model, seq_db, config, "joint", config.joint_s, ALL_BRANCHES, "m",
                            list(model.parameters()), rng)
        record = StageRecord(name="joint", s=config.joint_s, iterations=config.iterations_per_stage,
                             final_loss=loss, trained_parameters=["f", "e", "p", "a"])
        if on_stage:
            on_stage(record)
        return model, EmbedTrainingReport(multistage=False, s_schedule=[config.joint_s], stages=[record])

    validate_stage_order(config.stage_order)
    report = EmbedTrainingReport(multistage=True, s_schedule=[config.s_schedule[n] for n in config.stage_order])
    for name in config.stage_order:
        s = config.s_schedule[name]
        branch = STAGE_BRANCHES[name]
        if branch != "a":
            loss = _train_stage(model, seq_db, config, name, s, {branch}, name,
                                list(branches[branch].parameters()), rng)
            record = StageRecord(name=name, s=s, iterations=config.iterations_per_stage,
                                 final_loss=loss, trained_parameters=[branch])
        else:
            frozen = {key: branches[key] for key in ("f", "e", "p")}
            for module in frozen.values():
                module.requires_grad_(False)
            before = {key: _snapshot(module) for key, module in frozen.items()}
            loss = _train_stage(model, seq_db, config, name, s, ALL_BRANCHES, "m",
                                list(model.aggregator.parameters()), rng)
            unchanged = all(
                torch.equal(before[key][pname], param)
                for key, module in frozen.items() for pname, param in module.named_parameters()
            )
            for module in frozen.values():
                module.requires_grad_(True)
            if not unchanged:
                raise MOTSError("frozen branch parameters changed during the aggregation stage")
            record = StageRecord(name=name, s=s, iterations=config.iterations_per_stage,
                                 final_loss=loss, trained_parameters=["a"], frozen_unchanged=True)
        report.stages.append(record)
        if on_stage:
            on_stage(record)
    return model, report
