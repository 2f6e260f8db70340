"""Versioned checkpoint files.

Layout: the magic line `CDKIT-CKPT/1\\n`, an 8-byte little-endian manifest
length, a UTF-8 JSON manifest, then one raw little-endian buffer holding
every array at the offset its manifest entry records.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.core.errors import CheckpointError
from src.core.log import get_logger
from src.core.models import ModelConfig, TrainConfig
from src.model import ChangeFormer, buffer_specs, parameter_specs
from src.numerics.tensor import Tensor
from .optimizer import AdamState, AdamW

logger = get_logger(__name__)

MAGIC = b"CDKIT-CKPT/1\n"
FORMAT = "CDKIT-CKPT/1"
_LENGTH = struct.Struct("<Q")

Group = Literal["param", "buffer", "adam_m", "adam_v"]


class ManifestEntry(BaseModel):
    name: str
    group: Group
    shape: List[int]
    dtype: Literal["float32", "float64"]
    offset: int = Field(..., ge=0)
    nbytes: int = Field(..., ge=0)


class CheckpointManifest(BaseModel):
    """Everything needed to rebuild the model and resume optimization"""
    format: str = FORMAT
    epoch: int = Field(0, ge=0, description="Completed epochs")
    global_step: int = Field(0, ge=0)
    adam_step: int = Field(0, ge=0)
    dtype: Literal["float32", "float64"] = "float32"
    model: ModelConfig
    train: Optional[TrainConfig] = None
    metrics: Dict[str, float] = Field(default_factory=dict)
    entries: List[ManifestEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique(self):
        seen = set()
        for entry in self.entries:
            key = (entry.group, entry.name)
            if key in seen:
                raise ValueError(f"duplicate manifest entry {entry.group}:{entry.name}")
            seen.add(key)
        return self


@dataclass
class Checkpoint:
    manifest: CheckpointManifest
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    adam: AdamState = field(default_factory=AdamState)

    @property
    def config(self) -> ModelConfig:
        return self.manifest.model

    @property
    def epoch(self) -> int:
        return self.manifest.epoch

    def build_model(self) -> ChangeFormer:
        params = {name: Tensor(data, requires_grad=True, name=name) for name, data in self.params.items()}
        buffers = {name: data.copy() for name, data in self.buffers.items()}
        return ChangeFormer(self.config, params, buffers)

    def build_optimizer(self, model: ChangeFormer, cfg: TrainConfig) -> AdamW:
        state = AdamState(
            step=self.adam.step,
            m={k: v.copy() for k, v in self.adam.m.items()},
            v={k: v.copy() for k, v in self.adam.v.items()},
        )
        return AdamW(model.params, cfg, state)


def _little_endian(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes()


def save_checkpoint(path: Path, model: ChangeFormer, optimizer: Optional[AdamW] = None, epoch: int = 0,
                    global_step: int = 0, metrics: Optional[Dict[str, float]] = None) -> Path:
    """Write model weights, running statistics and optimizer moments"""
    groups: List[Tuple[str, Dict[str, np.ndarray]]] = [
        ("param", {name: t.data for name, t in model.params.items()}),
        ("buffer", model.buffers),
    ]
    if optimizer is not None:
        groups += [("adam_m", optimizer.state.m), ("adam_v", optimizer.state.v)]

    entries, chunks, offset = [], [], 0
    for group, arrays in groups:
        for name, array in arrays.items():
            raw = _little_endian(array)
            entries.append(ManifestEntry(
                name=name, group=group, shape=list(array.shape), dtype=str(array.dtype),
                offset=offset, nbytes=len(raw),
            ))
            chunks.append(raw)
            offset += len(raw)

    manifest = CheckpointManifest(
        epoch=epoch,
        global_step=global_step,
        adam_step=optimizer.state.step if optimizer is not None else 0,
        dtype=model.dtype,
        model=model.config,
        train=optimizer.cfg if optimizer is not None else None,
        metrics=metrics or {},
        entries=entries,
    )
    header = manifest.model_dump_json().encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(_LENGTH.pack(len(header)))
            f.write(header)
            for chunk in chunks:
                f.write(chunk)
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.debug("saved checkpoint %s (epoch %d, %d arrays)", path, epoch, len(entries))
    return path


def check_compatible(manifest: CheckpointManifest, config: ModelConfig) -> None:
    """Raise naming the first parameter whose presence or shape differs from `config`"""
    stored = {e.name: tuple(e.shape) for e in manifest.entries if e.group == "param"}
    for spec in parameter_specs(config):
        if spec.name not in stored:
            raise CheckpointError(f"checkpoint does not match config: parameter '{spec.name}' is missing")
        if stored[spec.name] != spec.shape:
            raise CheckpointError(
                f"checkpoint does not match config: parameter '{spec.name}' has shape "
                f"{stored[spec.name]}, config expects {spec.shape}"
            )
    expected = {spec.name for spec in parameter_specs(config)}
    for name in stored:
        if name not in expected:
            raise CheckpointError(f"checkpoint does not match config: unexpected parameter '{name}'")


def load_checkpoint(path: Path, expected_config: Optional[ModelConfig] = None) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a {FORMAT} checkpoint (bad magic)")
    start = len(MAGIC) + _LENGTH.size
    if len(raw) < start:
        raise CheckpointError(f"{path}: truncated header")
    (length,) = _LENGTH.unpack_from(raw, len(MAGIC))
    if start + length > len(raw):
        raise CheckpointError(f"{path}: manifest length {length} exceeds file size")
    try:
        manifest = CheckpointManifest.model_validate_json(raw[start:start + length])
    except ValidationError as e:
        raise CheckpointError(f"{path}: corrupt manifest: {e.errors()[0]['msg']}") from e
    if manifest.format != FORMAT:
        raise CheckpointError(f"{path}: unsupported format {manifest.format!r}")

    if expected_config is not None:
        check_compatible(manifest, expected_config)
    else:
        check_compatible(manifest, manifest.model)

    payload = memoryview(raw)[start + length:]
    checkpoint = Checkpoint(manifest, adam=AdamState(step=manifest.adam_step))
    targets = {
        "param": checkpoint.params, "buffer": checkpoint.buffers,
        "adam_m": checkpoint.adam.m, "adam_v": checkpoint.adam.v,
    }
    for entry in manifest.entries:
        dtype = np.dtype(entry.dtype)
        count = int(np.prod(entry.shape, dtype=np.int64))
        if entry.offset + entry.nbytes > len(payload) or count * dtype.itemsize != entry.nbytes:
            raise CheckpointError(f"{path}: entry '{entry.name}' ({entry.group}) lies outside the data buffer")
        array = np.frombuffer(payload, dtype=dtype.newbyteorder("<"), count=count, offset=entry.offset)
        targets[entry.group][entry.name] = array.astype(dtype).reshape(entry.shape)

    missing = [s.name for s in buffer_specs(manifest.model) if s.name not in checkpoint.buffers]
    if missing:
        raise CheckpointError(f"{path}: running statistics '{missing[0]}' are missing")
    return checkpoint
