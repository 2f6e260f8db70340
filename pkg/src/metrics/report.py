"""Precision, recall, F1, IoU and overall accuracy of the change class"""
from __future__ import annotations

from typing import Dict, List

from pydantic import BaseModel, Field

from src.core.errors import UserError
from .confusion import ConfusionMatrix

METRIC_NAMES = ("precision", "recall", "f1", "iou", "oa")


class MetricReport(BaseModel):
    """Fractions in [0, 1]; a 0/0 ratio is reported as 0 and named in `degenerate`"""
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    iou: float = Field(..., ge=0.0, le=1.0)
    oa: float = Field(..., ge=0.0, le=1.0)
    degenerate: List[str] = Field(default_factory=list, description="Metrics whose ratio was 0/0")
    counts: Dict[str, int] = Field(default_factory=dict)

    def percentages(self) -> Dict[str, float]:
        return {name: round(100.0 * getattr(self, name), 2) for name in METRIC_NAMES}

    def to_text(self) -> str:
        """`key: value` lines, percentages at 2 decimals"""
        lines = [f"{name}: {100.0 * getattr(self, name):.2f}" for name in METRIC_NAMES]
        if self.degenerate:
            lines.append(f"degenerate: {', '.join(self.degenerate)}")
        return "\n".join(lines) + "\n"


def _ratio(num: int, den: int, name: str, degenerate: List[str]) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def report(cm: ConfusionMatrix) -> MetricReport:
    if cm.total <= 0:
        raise UserError("cannot report metrics of an empty confusion matrix")

    degenerate: List[str] = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", degenerate)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", degenerate)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    iou = _ratio(cm.tp, cm.tp + cm.fp + cm.fn, "iou", degenerate)
    oa = (cm.tp + cm.tn) / cm.total

    return MetricReport(
        precision=precision, recall=recall, f1=f1, iou=iou, oa=oa,
        degenerate=degenerate, counts=cm.as_dict(),
    )
