"""Evaluation service: pooled confusion matrix over a sample set"""
from typing import Iterable, List, Tuple

from src.data import BiTemporalSample, stack_batch
from src.metrics import ConfusionMatrix, MetricReport, accumulate, report
from src.model import ChangeFormer


class EvaluationService:
    """Service for scoring a model against labelled samples"""

    def __init__(self, model: ChangeFormer, batch_size: int = 16, strict: bool = True):
        self.model = model
        self.batch_size = batch_size
        self.strict = strict

    def _score(self, cm: ConfusionMatrix, batch: List[BiTemporalSample]) -> ConfusionMatrix:
        pre, post, labels = stack_batch(batch, self.model.dtype)
        predicted = self.model.predict(pre, post, strict=self.strict)
        return accumulate(cm, predicted, labels)

    def confusion(self, samples: Iterable[BiTemporalSample]) -> ConfusionMatrix:
        """
        Micro-averaged counts: every pixel of every sample goes into one matrix

        Args:
            samples: Labelled samples; consecutive samples of one size are batched

        Returns:
            Pooled ConfusionMatrix
        """
        cm = ConfusionMatrix()
        batch: List[BiTemporalSample] = []
        for sample in samples:
            if batch and (len(batch) == self.batch_size or sample.size != batch[0].size):
                cm = self._score(cm, batch)
                batch = []
            batch.append(sample)
        if batch:
            cm = self._score(cm, batch)
        return cm

    def evaluate(self, samples: Iterable[BiTemporalSample]) -> Tuple[ConfusionMatrix, MetricReport]:
        cm = self.confusion(samples)
        return cm, report(cm)
