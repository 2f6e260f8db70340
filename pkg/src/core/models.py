"""Pydantic models for model, training, augmentation and run configuration"""
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import ConfigError

# Downsampling (kernel, stride, padding) per encoder stage
PATCH_EMBED_SPECS = ((7, 4, 3), (3, 2, 1), (3, 2, 1), (3, 2, 1))

SIZE_MULTIPLE = 32


class StageConfig(BaseModel):
    """One encoder stage"""
    channels: int = Field(..., gt=0, description="Stage width C_i")
    depth: int = Field(..., ge=0, description="Transformer blocks in this stage")
    heads: int = Field(..., gt=0, description="Attention heads")
    reduction: int = Field(1, ge=1, description="Token-count reduction R (perfect square)")

    @model_validator(mode="after")
    def _check(self):
        if self.channels % self.heads:
            raise ValueError(f"channels {self.channels} not divisible by heads {self.heads}")
        if math.isqrt(self.reduction) ** 2 != self.reduction:
            raise ValueError(f"reduction {self.reduction} must be a perfect square")
        return self

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def window(self) -> int:
        """Spatial side of the folding window, sqrt(R)"""
        return math.isqrt(self.reduction)


class DecoderConfig(BaseModel):
    """MLP decoder and difference modules"""
    embed_dim: int = Field(256, gt=0, description="Embedding dimension C_ebd")
    num_classes: Literal[2] = Field(2, description="change / no-change")
    difference_mode: Literal["learned", "absolute"] = Field(
        "learned",
        description="learned: Cat -> Conv3x3 -> ReLU -> BN; absolute: |F_pre - F_post| (ablation)",
    )


class ModelConfig(BaseModel):
    """Full architecture description"""
    preset: Literal["tiny", "base", "custom"] = "custom"
    stages: List[StageConfig] = Field(..., min_length=4, max_length=4)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)
    input_size: Tuple[int, int] = Field((256, 256), description="Training (H, W)")
    in_channels: int = Field(3, gt=0)
    ffn_expansion: int = Field(4, gt=0)
    bn_momentum: float = Field(0.1, gt=0.0, lt=1.0)
    bn_eps: float = Field(1e-5, gt=0.0)
    ln_eps: float = Field(1e-6, gt=0.0)

    @model_validator(mode="after")
    def _check(self):
        h, w = self.input_size
        if h % SIZE_MULTIPLE or w % SIZE_MULTIPLE or h <= 0 or w <= 0:
            raise ValueError(f"input size {self.input_size} must be positive multiples of {SIZE_MULTIPLE}")
        channels = [s.channels for s in self.stages]
        if any(b <= a for a, b in zip(channels, channels[1:])):
            raise ValueError(f"stage channels must strictly increase, got {channels}")
        return self

    @property
    def channels(self) -> List[int]:
        return [s.channels for s in self.stages]

    @classmethod
    def from_preset(cls, name: str, input_size: Tuple[int, int] = None) -> "ModelConfig":
        """Build the `tiny` (CI scale) or `base` (desk scale) architecture"""
        if name == "tiny":
            stages = [
                StageConfig(channels=c, depth=1, heads=h, reduction=r)
                for c, h, r in zip([8, 16, 32, 64], [1, 2, 4, 8], [4, 1, 1, 1])
            ]
            return cls(preset="tiny", stages=stages, decoder=DecoderConfig(embed_dim=32),
                       input_size=input_size or (64, 64))
        if name == "base":
            stages = [
                StageConfig(channels=c, depth=2, heads=h, reduction=r)
                for c, h, r in zip([32, 64, 128, 256], [1, 2, 4, 8], [64, 16, 4, 1])
            ]
            return cls(preset="base", stages=stages, decoder=DecoderConfig(embed_dim=256),
                       input_size=input_size or (256, 256))
        raise ConfigError(f"unknown preset {name!r}; expected 'tiny' or 'base'")


class AugmentConfig(BaseModel):
    """Training-time augmentation; each transform fires with its own probability"""
    enabled: bool = True
    hflip_p: float = Field(0.5, ge=0.0, le=1.0)
    vflip_p: float = Field(0.5, ge=0.0, le=1.0)
    rescale_p: float = Field(0.5, ge=0.0, le=1.0)
    rescale_range: Tuple[float, float] = (0.8, 1.2)
    blur_p: float = Field(0.5, ge=0.0, le=1.0)
    blur_sigma_max: float = Field(1.5, ge=0.0)
    jitter_p: float = Field(0.5, ge=0.0, le=1.0)
    brightness: float = Field(0.2, ge=0.0)
    contrast: float = Field(0.2, ge=0.0)
    saturation: float = Field(0.2, ge=0.0)

    @field_validator("rescale_range")
    @classmethod
    def _range(cls, v):
        lo, hi = v
        if not 0 < lo <= hi:
            raise ValueError(f"rescale range must satisfy 0 < lo <= hi, got {v}")
        return v


class TrainConfig(BaseModel):
    """Optimization recipe"""
    initial_lr: float = Field(1e-4, gt=0.0, description="Linearly decays to 0 over all steps")
    weight_decay: float = Field(0.01, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0.0)
    epochs: int = Field(200, ge=0)
    batch_size: int = Field(16, gt=0)
    seed: int = Field(0, ge=0)
    dtype: Literal["float32", "float64"] = "float32"

    @field_validator("betas")
    @classmethod
    def _betas(cls, v):
        if not all(0.0 < b < 1.0 for b in v):
            raise ValueError(f"betas must lie in (0, 1), got {v}")
        return v


class RunConfig(BaseModel):
    """Fully resolved configuration of one CLI run"""
    command: str
    preset: Optional[Literal["tiny", "base", "custom"]] = Field(
        None, description="Model preset; None for commands without a model")
    model: Optional[ModelConfig] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    data_root: Optional[Path] = None
    output_dir: Path
    options: Dict[str, Any] = Field(default_factory=dict, description="Command-specific flags")
