"""Non-overlapping patch extraction and random train/val/test splitting"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.core.errors import ConfigError, ShapeError
from .samples import BiTemporalSample

SPLIT_NAMES = ("train", "val", "test")

# Published train/val/test patch counts
SPLIT_PRESETS: Dict[str, Tuple[int, int, int]] = {
    "levir-cd": (7120, 1024, 2048),
    "dsifn-cd": (14400, 1360, 192),
}


@dataclass
class DatasetSplit:
    name: str
    ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)


def patch_grid(height: int, width: int, size: int) -> Tuple[int, int]:
    if size < 1:
        raise ConfigError(f"patch size must be positive, got {size}")
    if height % size or width % size:
        raise ShapeError(f"source of size {height}x{width} is not divisible into {size}x{size} patches")
    return height // size, width // size


def crop_array(array: np.ndarray, size: int) -> List[np.ndarray]:
    """Row-major grid of size×size tiles"""
    rows, cols = patch_grid(array.shape[0], array.shape[1], size)
    return [
        array[r * size:(r + 1) * size, c * size:(c + 1) * size].copy()
        for r in range(rows) for c in range(cols)
    ]


def crop_patches(sample: BiTemporalSample, size: int = 256) -> List[BiTemporalSample]:
    """Crop pre, post and label on the same grid; names are `<stem>_<row>_<col>`"""
    rows, cols = patch_grid(*sample.size, size)
    pres, posts, labels = (crop_array(a, size) for a in (sample.pre, sample.post, sample.label))
    stem = sample.name or "patch"
    return [
        BiTemporalSample(pre, post, label, name=f"{stem}_{i // cols}_{i % cols}")
        for i, (pre, post, label) in enumerate(zip(pres, posts, labels))
    ]


def stitch_array(tiles: Sequence[np.ndarray], grid: Tuple[int, int]) -> np.ndarray:
    rows, cols = grid
    if len(tiles) != rows * cols:
        raise ShapeError(f"{len(tiles)} tiles do not fill a {rows}x{cols} grid")
    return np.concatenate(
        [np.concatenate(tiles[r * cols:(r + 1) * cols], axis=1) for r in range(rows)], axis=0
    )


def stitch_patches(patches: Sequence[BiTemporalSample], grid: Tuple[int, int], name: str = "") -> BiTemporalSample:
    """Inverse of crop_patches for a row-major patch list"""
    return BiTemporalSample(
        stitch_array([p.pre for p in patches], grid),
        stitch_array([p.post for p in patches], grid),
        stitch_array([p.label for p in patches], grid),
        name=name,
    )


def split_random(ids: Sequence[str], counts: Sequence[int], seed: int) -> Dict[str, DatasetSplit]:
    """Disjoint train/val/test splits of the requested sizes from one seeded permutation"""
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise ConfigError(f"split counts must be three non-negative integers, got {counts}")
    if sum(counts) > len(ids):
        raise ConfigError(f"split counts {counts} need {sum(counts)} patches, only {len(ids)} available")

    order = np.random.default_rng(seed).permutation(len(ids))
    splits, start = {}, 0
    for name, count in zip(SPLIT_NAMES, counts):
        splits[name] = DatasetSplit(name, [ids[i] for i in order[start:start + count]])
        start += count
    return splits
