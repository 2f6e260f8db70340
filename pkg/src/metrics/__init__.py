"""Change-class confusion counts and metric reports"""
from .confusion import ConfusionMatrix, accumulate, merge, predictions_from_logits
from .reference import REFERENCE_ROWS, ReferenceRow, reference_table
from .report import METRIC_NAMES, MetricReport, report

__all__ = [
    "ConfusionMatrix",
    "accumulate",
    "merge",
    "predictions_from_logits",
    "REFERENCE_ROWS",
    "ReferenceRow",
    "reference_table",
    "METRIC_NAMES",
    "MetricReport",
    "report",
]
