"""
MOTS Metrics - Mask matching and sMOTSA / MOTSA / IDS accounting
A ground-truth and a hypothesis mask of the same class match when their IoU
exceeds 0.5; with disjoint masks on both sides such a match is unique.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from core.exceptions import DataFormatError, EvaluationRefusal
from core.mots_io import load_mots_results, load_mots_sequence, mask_iou
from models.metrics_models import ClassTally, FrameMatch, MetricsReport, empty_classes
from models.mots_models import CLASS_NAMES, InstanceMask, Sequence, find_overlap

logger = logging.getLogger(__name__)

MATCH_IOU = 0.5
IGNORE_FRACTION = 0.5


def _hyp_id(inst: InstanceMask) -> int:
    return inst.track_id if inst.track_id is not None else inst.instance_id


def match_frame(gt: List[InstanceMask], hyp: List[InstanceMask], ignore: Optional[np.ndarray] = None,
                frame_index: Optional[int] = None, use_ignore: bool = True) -> FrameMatch:
    """
    Match one frame.

    Unmatched hypotheses with more than half of their own area inside the
    ignore region are dropped instead of counted as false positives.

    Raises:
        EvaluationRefusal: hypothesis masks overlap
    """
    clash = find_overlap([h.mask for h in hyp])
    if clash is not None:
        raise EvaluationRefusal(
            f"hypotheses {hyp[clash[0]].instance_id} and {hyp[clash[1]].instance_id} overlap",
            frame_index=frame_index, overlapping=(hyp[clash[0]].instance_id, hyp[clash[1]].instance_id),
        )

    result = FrameMatch(frame_index=frame_index)
    matched_hyp = set()
    for gi, g in enumerate(gt):
        for hi, h in enumerate(hyp):
            if hi in matched_hyp or h.class_id != g.class_id:
                continue
            iou = mask_iou(g, h)
            if iou > MATCH_IOU:
                result.matches.append((gi, hi, iou))
                matched_hyp.add(hi)
                break
        else:
            result.unmatched_gt.append(gi)

    for hi, h in enumerate(hyp):
        if hi in matched_hyp:
            continue
        if use_ignore and ignore is not None and (h.mask & ignore).sum() > IGNORE_FRACTION * h.area:
            result.ignored.append(hi)
        else:
            result.false_positives.append(hi)
    return result


def _check_sizes(gt: Sequence, hyp: Dict[int, List[InstanceMask]]):
    sizes = {inst.shape for instances in gt.annotations.values() for inst in instances}
    sizes |= {region.shape for region in gt.ignore_regions.values()}
    if gt.height is not None and gt.width is not None:
        sizes.add((gt.height, gt.width))
    for frame_index, instances in hyp.items():
        for inst in instances:
            if sizes and inst.shape not in sizes:
                expected = "x".join(str(v) for v in next(iter(sizes)))
                raise DataFormatError(f"frame {frame_index}: hypothesis mask is {inst.shape[0]}x{inst.shape[1]}, "
                                      f"ground truth is {expected}")


def evaluate_sequence(gt: Sequence, hyp: Dict[int, List[InstanceMask]], use_ignore: bool = True) -> MetricsReport:
    """
    sMOTSA, MOTSA and IDS for one sequence.

    Frames without hypotheses count as empty. An id switch is a matched GT
    mask whose hypothesis id differs from the one matched to the same GT
    track most recently.

    Raises:
        DataFormatError: a hypothesis mask differs in size from the ground truth
        EvaluationRefusal: hypothesis masks overlap
    """
    tallies = empty_classes()
    last_match: Dict[tuple, int] = {}
    _check_sizes(gt, hyp)

    for frame_index in sorted(set(gt.annotations) | set(hyp)):
        gt_frame = gt.annotations_for(frame_index)
        hyp_frame = hyp.get(frame_index, [])
        result = match_frame(gt_frame, hyp_frame, gt.ignore_regions.get(frame_index), frame_index, use_ignore)

        for g in gt_frame:
            tallies[CLASS_NAMES[g.class_id]].gt_count += 1
        for gi, hi, iou in result.matches:
            g, h = gt_frame[gi], hyp_frame[hi]
            tally = tallies[CLASS_NAMES[g.class_id]]
            tally.tp += 1
            tally.soft_tp += iou
            key = (int(g.class_id), g.track_id)
            if key in last_match and last_match[key] != _hyp_id(h):
                tally.ids += 1
            last_match[key] = _hyp_id(h)
        for gi in result.unmatched_gt:
            tallies[CLASS_NAMES[gt_frame[gi].class_id]].fn += 1
        for hi in result.false_positives:
            tallies[CLASS_NAMES[hyp_frame[hi].class_id]].fp += 1

    return MetricsReport(classes=tallies, per_sequence={gt.sequence_id: {k: v.model_copy() for k, v in tallies.items()}})


def merge_reports(reports: Iterable[MetricsReport]) -> MetricsReport:
    """Sum per-class tallies; per-sequence breakdowns are concatenated"""
    merged = MetricsReport()
    for report in reports:
        for name, tally in report.classes.items():
            merged.classes[name] = merged.classes.get(name, ClassTally()) + tally
        merged.per_sequence.update(report.per_sequence)
    return merged


def evaluate_files(gt_path: str, result_path: str, use_ignore: bool = True) -> MetricsReport:
    gt = load_mots_sequence(gt_path)
    return evaluate_sequence(gt, load_mots_results(result_path), use_ignore)


def evaluate_directories(gt_dir: str, result_dir: str, use_ignore: bool = True) -> MetricsReport:
    """Evaluate every <sequence>.txt of gt_dir; a missing result file counts as empty"""
    reports = []
    for gt_path in sorted(Path(gt_dir).glob("*.txt")):
        result_path = Path(result_dir) / gt_path.name
        gt = load_mots_sequence(str(gt_path))
        if result_path.exists():
            hyp = load_mots_results(str(result_path))
        else:
            logger.warning(f"⚠️ no result file for sequence {gt.sequence_id}; evaluating as empty")
            hyp = {}
        reports.append(evaluate_sequence(gt, hyp, use_ignore))
    return merge_reports(reports)


def report_key_values(report: MetricsReport) -> List[str]:
    """Machine-readable lines, stable order: class blocks then 'all'"""
    lines = []
    for name, tally in list(report.classes.items()) + [("all", report.overall)]:
        lines += [
            f"{name}.sMOTSA={tally.smotsa:.6f}",
            f"{name}.MOTSA={tally.motsa:.6f}",
            f"{name}.IDS={tally.ids}",
            f"{name}.TP={tally.tp}",
            f"{name}.FP={tally.fp}",
            f"{name}.FN={tally.fn}",
            f"{name}.softTP={tally.soft_tp:.6f}",
            f"{name}.M={tally.gt_count}",
        ]
    return lines


def format_report(report: MetricsReport) -> str:
    """Plain-text table"""
    header = f"{'class':<12} {'sMOTSA':>8} {'MOTSA':>8} {'IDS':>5} {'TP':>6} {'FP':>6} {'FN':>6} {'M':>6}"
    rows = [header, "-" * len(header)]
    for name, tally in list(report.classes.items()) + [("all", report.overall)]:
        rows.append(f"{name:<12} {tally.smotsa * 100:8.2f} {tally.motsa * 100:8.2f} {tally.ids:5d} "
                    f"{tally.tp:6d} {tally.fp:6d} {tally.fn:6d} {tally.gt_count:6d}")
    if len(report.per_sequence) > 1:
        rows.append("")
        for sequence_id, classes in sorted(report.per_sequence.items()):
            total = sum(classes.values(), ClassTally())
            rows.append(f"seq {sequence_id:<8} {total.smotsa * 100:8.2f} {total.motsa * 100:8.2f} {total.ids:5d}")
    return "\n".join(rows)


def write_report(report: MetricsReport, text_path: str, kv_path: str):
    Path(text_path).parent.mkdir(parents=True, exist_ok=True)
    Path(text_path).write_text(format_report(report) + "\n", encoding="utf-8")
    Path(kv_path).write_text("\n".join(report_key_values(report)) + "\n", encoding="utf-8")
