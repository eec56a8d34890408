"""
Metrics Models - CLEAR-MOTS style tallies and reports
"""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from models.config_models import AblationSpec
from models.mots_models import CLASS_NAMES


class ClassTally(BaseModel):
    """Counts for one class; M (gt_count) is the number of ground-truth masks"""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ids: int = 0
    soft_tp: float = 0.0
    gt_count: int = 0

    def __add__(self, other: "ClassTally") -> "ClassTally":
        return ClassTally(tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn,
                          ids=self.ids + other.ids, soft_tp=self.soft_tp + other.soft_tp,
                          gt_count=self.gt_count + other.gt_count)

    @property
    def motsa(self) -> float:
        if self.gt_count == 0:
            return 0.0
        return (self.tp - self.fp - self.ids) / self.gt_count

    @property
    def smotsa(self) -> float:
        if self.gt_count == 0:
            return 0.0
        return (self.soft_tp - self.fp - self.ids) / self.gt_count

    def violations(self) -> List[str]:
        problems = []
        if self.tp + self.fn != self.gt_count:
            problems.append(f"TP+FN={self.tp + self.fn} != M={self.gt_count}")
        if self.smotsa > self.motsa + 1e-12:
            problems.append(f"sMOTSA {self.smotsa} > MOTSA {self.motsa}")
        if self.motsa > 1.0 + 1e-12:
            problems.append(f"MOTSA {self.motsa} > 1")
        if self.soft_tp > self.tp + 1e-12:
            problems.append("soft TP exceeds TP")
        return problems


def empty_classes() -> Dict[str, ClassTally]:
    return {name: ClassTally() for name in CLASS_NAMES.values()}


class MetricsReport(BaseModel):
    """Per-class tallies plus an optional per-sequence breakdown"""
    classes: Dict[str, ClassTally] = Field(default_factory=empty_classes)
    per_sequence: Dict[str, Dict[str, ClassTally]] = Field(default_factory=dict)

    @property
    def overall(self) -> ClassTally:
        total = ClassTally()
        for tally in self.classes.values():
            total = total + tally
        return total

    def violations(self) -> List[str]:
        problems = []
        for name, tally in list(self.classes.items()) + [("all", self.overall)]:
            problems.extend(f"{name}: {p}" for p in tally.violations())
        return problems


class FrameMatch(BaseModel):
    """Outcome of matching one frame; indices refer to the gt / hyp lists"""
    matches: List[Tuple[int, int, float]] = Field(default_factory=list, description="(gt, hyp, IoU)")
    unmatched_gt: List[int] = Field(default_factory=list)
    false_positives: List[int] = Field(default_factory=list)
    ignored: List[int] = Field(default_factory=list, description="Unmatched hyps suppressed by ignore regions")
    frame_index: Optional[int] = None


class AblationRow(BaseModel):
    """One configuration of the ablation table and its outcome"""
    label: str
    spec: AblationSpec
    status: str = Field(default="pending", description="pending, completed, failed")
    run_id: Optional[str] = None
    report: Optional[MetricsReport] = None
    error: Optional[str] = None


class AblationTable(BaseModel):
    rows: List[AblationRow] = Field(default_factory=list)

    @property
    def complete(self) -> bool:
        return all(row.status == "completed" for row in self.rows)
