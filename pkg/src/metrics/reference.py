"""Published ChangeFormer results (percent) used for self-consistency checks"""
from dataclasses import dataclass
from typing import Dict

import pandas as pd


@dataclass(frozen=True)
class ReferenceRow:
    dataset: str
    precision: float
    recall: float
    f1: float
    iou: float
    oa: float

    def f1_from_pr(self) -> float:
        return 2 * self.precision * self.recall / (self.precision + self.recall)

    def iou_from_f1(self) -> float:
        f1 = self.f1 / 100.0
        return 100.0 * f1 / (2.0 - f1)


REFERENCE_ROWS: Dict[str, ReferenceRow] = {
    "levir-cd": ReferenceRow("levir-cd", 92.05, 88.80, 90.40, 82.48, 99.04),
    "dsifn-cd": ReferenceRow("dsifn-cd", 88.48, 84.94, 86.67, 76.48, 95.56),
}


def reference_table() -> pd.DataFrame:
    rows = [
        {**vars(row), "f1_from_pr": round(row.f1_from_pr(), 2), "iou_from_f1": round(row.iou_from_f1(), 2)}
        for row in REFERENCE_ROWS.values()
    ]
    return pd.DataFrame(rows).set_index("dataset")
