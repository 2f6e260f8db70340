"""Core functionality for cdkit: configuration, errors, logging and config models"""
from .config import Config
from .errors import (
    CdkitError,
    CheckpointError,
    ConfigError,
    DatasetError,
    DTypeError,
    NumericalError,
    ShapeError,
    UserError,
)
from .log import RunLog, get_logger
from .models import AugmentConfig, DecoderConfig, ModelConfig, RunConfig, StageConfig, TrainConfig

__all__ = [
    "Config",
    "CdkitError",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DTypeError",
    "NumericalError",
    "ShapeError",
    "UserError",
    "RunLog",
    "get_logger",
    "AugmentConfig",
    "DecoderConfig",
    "ModelConfig",
    "RunConfig",
    "StageConfig",
    "TrainConfig",
]
