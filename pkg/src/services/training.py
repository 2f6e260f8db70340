"""Training service: cross-entropy, AdamW and a per-step linear LR decay"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.errors import ConfigError, DatasetError, NumericalError
from src.core.log import RunLog, get_logger
from src.core.models import AugmentConfig, TrainConfig
from src.data import BiTemporalSample, augment, stack_batch
from src.model import ChangeFormer
from src.nn import cross_entropy
from src.numerics.tensor import GradTape
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import EvaluationService
from .optimizer import AdamW

logger = get_logger(__name__)

LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"
LOG_FILE = "train_log.jsonl"
HISTORY_FILE = "history.csv"


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """initial_lr · (1 − step/total_steps); a zero-step run keeps initial_lr"""
    if step < 0 or step > total_steps:
        raise ConfigError(f"step {step} outside schedule of {total_steps} steps")
    if total_steps == 0:
        return cfg.initial_lr
    return cfg.initial_lr * (1.0 - step / total_steps)


def steps_per_epoch(num_samples: int, batch_size: int) -> int:
    """The last incomplete batch counts"""
    return math.ceil(num_samples / batch_size)


def epoch_batches(num_samples: int, batch_size: int, seed: int, epoch: int) -> List[np.ndarray]:
    order = np.random.default_rng([seed, epoch]).permutation(num_samples)
    return [order[i:i + batch_size] for i in range(0, num_samples, batch_size)]


def augment_sample(sample: BiTemporalSample, index: int, epoch: int, seed: int,
                   config: Optional[AugmentConfig]) -> BiTemporalSample:
    """Per-sample RNG from (seed, epoch, index) so batch order never changes the draw"""
    if config is None or not config.enabled:
        return sample
    return augment(sample, np.random.default_rng([seed, epoch, index]), config)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    steps: int
    global_step: int
    lr_start: float
    lr_end: float


def train_epoch(
    model: ChangeFormer,
    optimizer: AdamW,
    dataset: Sequence[BiTemporalSample],
    epoch: int,
    cfg: TrainConfig,
    total_steps: int,
    global_step: int = 0,
    augment_cfg: Optional[AugmentConfig] = None,
    schedule: Optional[Callable[[int], float]] = None,
) -> EpochStats:
    """
    One pass over shuffled batches: augment, forward, CE loss, backward, AdamW step

    Args:
        model: Network updated in place (weights and BN running statistics)
        optimizer: AdamW bound to model.params
        dataset: Training samples, all of one size
        epoch: Epoch index; seeds the shuffle and augmentation
        cfg: Recipe (batch size, seed, dtype, optimizer settings)
        total_steps: Length of the whole LR schedule
        global_step: Optimizer steps taken before this epoch
        augment_cfg: Augmentation settings; None disables augmentation
        schedule: Overrides lr_at (step -> learning rate)

    Returns:
        EpochStats with the mean batch loss and the advanced global step
    """
    if not dataset:
        raise DatasetError("cannot train on an empty dataset")
    schedule = schedule or (lambda step: lr_at(step, total_steps, cfg))

    losses: List[float] = []
    lr_start = lr_end = 0.0
    for b, indices in enumerate(epoch_batches(len(dataset), cfg.batch_size, cfg.seed, epoch)):
        batch = [augment_sample(dataset[i], int(i), epoch, cfg.seed, augment_cfg) for i in indices]
        pre, post, labels = stack_batch(batch, model.dtype)

        optimizer.zero_grad()
        with GradTape() as tape:
            logits = model(pre, post, training=True)
            loss = cross_entropy(logits, labels)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b} (step {global_step})")
            tape.backward(loss)

        lr_end = schedule(global_step)
        if b == 0:
            lr_start = lr_end
        optimizer.step(lr_end)
        global_step += 1
        losses.append(value)

    return EpochStats(epoch, float(np.mean(losses)), len(losses), global_step, lr_start, lr_end)


@dataclass
class TrainingResult:
    history: pd.DataFrame
    best_f1: float
    best_epoch: int
    last_checkpoint: Path
    best_checkpoint: Path
    records: List[dict] = field(default_factory=list)


class TrainingService:
    """Runs the full recipe and keeps `last` and `best` checkpoints in one directory"""

    def __init__(self, model: ChangeFormer, train_cfg: TrainConfig, output_dir: Path,
                 augment_cfg: Optional[AugmentConfig] = None, optimizer: Optional[AdamW] = None):
        self.model = model
        self.cfg = train_cfg
        self.augment_cfg = augment_cfg
        self.output_dir = Path(output_dir)
        self.optimizer = optimizer or AdamW(model.params, train_cfg)

    @classmethod
    def resume(cls, checkpoint_path: Path, train_cfg: TrainConfig, output_dir: Path,
               augment_cfg: Optional[AugmentConfig] = None):
        """Rebuild model and optimizer from a checkpoint; returns (service, epoch, global_step, metrics)"""
        checkpoint = load_checkpoint(checkpoint_path)
        model = checkpoint.build_model()
        service = cls(model, train_cfg, output_dir, augment_cfg, checkpoint.build_optimizer(model, train_cfg))
        return service, checkpoint.epoch, checkpoint.manifest.global_step, checkpoint.manifest.metrics

    def _selection_f1(self, train: Sequence[BiTemporalSample], val: Sequence[BiTemporalSample]):
        split, samples = ("val", val) if val else ("train", train)
        _, metrics = EvaluationService(self.model, self.cfg.batch_size).evaluate(samples)
        return split, metrics

    def fit(self, train: Sequence[BiTemporalSample], val: Sequence[BiTemporalSample] = (),
            start_epoch: int = 0, global_step: int = 0, best_f1: float = -1.0,
            best_epoch: int = -1) -> TrainingResult:
        """
        Train from `start_epoch` up to cfg.epochs

        Args:
            train: Training samples
            val: Validation samples; best.ckpt is chosen on them (on train when empty)
            start_epoch: Epochs already completed (resume)
            global_step: Optimizer steps already taken (resume)
            best_f1: Best selection F1 so far (resume)
            best_epoch: Epoch of best_f1 (resume)

        Returns:
            TrainingResult with the per-epoch history
        """
        if not train:
            raise DatasetError("training split is empty")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        last_path = self.output_dir / LAST_CHECKPOINT
        best_path = self.output_dir / BEST_CHECKPOINT
        run_log = RunLog(self.output_dir / LOG_FILE, logger, append=start_epoch > 0)

        per_epoch = steps_per_epoch(len(train), self.cfg.batch_size)
        total_steps = per_epoch * self.cfg.epochs
        run_log.write({
            "event": "start",
            "samples": len(train),
            "val_samples": len(val),
            "batch_size": self.cfg.batch_size,
            "epochs": self.cfg.epochs,
            "total_steps": total_steps,
            "lr": lr_at(min(global_step, total_steps), total_steps, self.cfg),
            "weight_decay": self.cfg.weight_decay,
            "seed": self.cfg.seed,
            "start_epoch": start_epoch,
        })

        if self.cfg.epochs == 0 or start_epoch >= self.cfg.epochs:
            metrics = {"best_f1": max(best_f1, 0.0), "best_epoch": float(best_epoch)}
            save_checkpoint(last_path, self.model, self.optimizer, start_epoch, global_step, metrics)
            if not best_path.exists():
                save_checkpoint(best_path, self.model, self.optimizer, start_epoch, global_step, metrics)

        for epoch in range(start_epoch, self.cfg.epochs):
            started = time.perf_counter()
            stats = train_epoch(
                self.model, self.optimizer, train, epoch, self.cfg,
                total_steps=total_steps, global_step=global_step, augment_cfg=self.augment_cfg,
            )
            global_step = stats.global_step
            split, selection = self._selection_f1(train, val)
            improved = selection.f1 > best_f1
            if improved:
                best_f1, best_epoch = selection.f1, epoch

            metrics = {"best_f1": best_f1, "best_epoch": float(best_epoch), f"{split}_f1": selection.f1}
            save_checkpoint(last_path, self.model, self.optimizer, epoch + 1, global_step, metrics)
            if improved:
                save_checkpoint(best_path, self.model, self.optimizer, epoch + 1, global_step, metrics)

            run_log.write({
                "event": "epoch",
                **asdict(stats),
                "selection_split": split,
                f"{split}_f1": selection.f1,
                f"{split}_iou": selection.iou,
                "best_f1": best_f1,
                "seconds": round(time.perf_counter() - started, 3),
            })

        epochs = [r for r in run_log.records if r.get("event") == "epoch"]
        history = pd.DataFrame(epochs)
        if not history.empty:
            # A resume from an older checkpoint repeats epochs; the latest run of each wins
            history = history.drop_duplicates("epoch", keep="last").sort_values("epoch").reset_index(drop=True)
        history.to_csv(self.output_dir / HISTORY_FILE, index=False)
        return TrainingResult(history, best_f1, best_epoch, last_path, best_path, run_log.records)
