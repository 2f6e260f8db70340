"""Services for training, evaluating and verifying change-detection models"""
from .checkpoint import Checkpoint, CheckpointManifest, load_checkpoint, save_checkpoint
from .evaluation import EvaluationService
from .inference import InferenceService
from .optimizer import AdamState, AdamW, adamw_step
from .training import EpochStats, TrainingResult, TrainingService, lr_at, train_epoch
from .verification import MODEL_ROW_NOTE, GradcheckReport, VerificationService
from .visualization import VisualizationService

__all__ = [
    "Checkpoint",
    "CheckpointManifest",
    "load_checkpoint",
    "save_checkpoint",
    "EvaluationService",
    "InferenceService",
    "AdamState",
    "AdamW",
    "adamw_step",
    "EpochStats",
    "TrainingResult",
    "TrainingService",
    "lr_at",
    "train_epoch",
    "GradcheckReport",
    "MODEL_ROW_NOTE",
    "VerificationService",
    "VisualizationService",
]
