"""Synthetic bi-temporal change generator.

Each scene is a smooth textured background with non-overlapping rectangles
and ellipses. The post image removes some shapes and adds new ones, then
applies a global brightness shift and per-pixel noise (irrelevant changes).
The label is exactly the union of the removed and added shape masks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence

import numpy as np
from scipy import ndimage

from src.core.errors import ConfigError
from src.core.models import SIZE_MULTIPLE
from .samples import BiTemporalSample

BACKGROUND_RANGE = (0.3, 0.5)
DARK_RANGE = (0.0, 0.1)
BRIGHT_RANGE = (0.75, 1.0)
MAX_SHIFT = 0.08
NOISE_STD = 0.01
TEXTURE_STD = 0.03


@dataclass(frozen=True)
class Shape:
    kind: Literal["rect", "ellipse"]
    top: int
    left: int
    height: int
    width: int
    color: tuple

    def overlaps(self, other: "Shape", gap: int = 1) -> bool:
        return not (
            self.top + self.height + gap <= other.top
            or other.top + other.height + gap <= self.top
            or self.left + self.width + gap <= other.left
            or other.left + other.width + gap <= self.left
        )

    def mask(self, size: int) -> np.ndarray:
        out = np.zeros((size, size), dtype=bool)
        if self.kind == "rect":
            out[self.top:self.top + self.height, self.left:self.left + self.width] = True
            return out
        yy, xx = np.mgrid[0:size, 0:size]
        cy, cx = self.top + (self.height - 1) / 2, self.left + (self.width - 1) / 2
        ry, rx = self.height / 2, self.width / 2
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


@dataclass
class Scene:
    size: int
    shapes: List[Shape]
    removed: List[int] = field(default_factory=list)
    added: List[Shape] = field(default_factory=list)
    shift: float = 0.0
    background: tuple = (0.4, 0.4, 0.4)

    @property
    def post_shapes(self) -> List[Shape]:
        kept = [s for i, s in enumerate(self.shapes) if i not in self.removed]
        return kept + self.added

    def change_mask(self) -> np.ndarray:
        """Pixels covered by any removed or added shape"""
        mask = np.zeros((self.size, self.size), dtype=bool)
        for shape in [self.shapes[i] for i in self.removed] + self.added:
            mask |= shape.mask(self.size)
        return mask


def _random_shape(rng: np.random.Generator, size: int) -> Shape:
    lo, hi = max(size // 8, 3), max(size // 3, 4)
    height, width = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
    top, left = int(rng.integers(0, size - height + 1)), int(rng.integers(0, size - width + 1))
    bounds = DARK_RANGE if rng.random() < 0.5 else BRIGHT_RANGE
    color = tuple(float(c) for c in rng.uniform(*bounds, size=3))
    kind = "rect" if rng.random() < 0.5 else "ellipse"
    return Shape(kind, top, left, height, width, color)


def _place(rng: np.random.Generator, size: int, taken: List[Shape], attempts: int = 50) -> Optional[Shape]:
    for _ in range(attempts):
        shape = _random_shape(rng, size)
        if not any(shape.overlaps(other) for other in taken):
            return shape
    return None


def random_scene(rng: np.random.Generator, size: int, edits: Optional[int] = None) -> Scene:
    """Lay out shapes, then pick `edits` removals/additions (random 1..3 when None)"""
    shapes: List[Shape] = []
    for _ in range(int(rng.integers(2, 6))):
        shape = _place(rng, size, shapes)
        if shape is not None:
            shapes.append(shape)

    edits = int(rng.integers(1, 4)) if edits is None else edits
    removed: List[int] = []
    added: List[Shape] = []
    for _ in range(edits):
        candidates = [i for i in range(len(shapes)) if i not in removed]
        if candidates and rng.random() < 0.5:
            removed.append(int(rng.choice(candidates)))
            continue
        shape = _place(rng, size, shapes + added)
        if shape is not None:
            added.append(shape)
        elif candidates:
            removed.append(int(rng.choice(candidates)))

    background = tuple(float(c) for c in rng.uniform(*BACKGROUND_RANGE, size=3))
    shift = float(rng.uniform(-MAX_SHIFT, MAX_SHIFT))
    return Scene(size, shapes, sorted(removed), added, shift, background)


def _paint(canvas: np.ndarray, shapes: Sequence[Shape]) -> np.ndarray:
    for shape in shapes:
        canvas[shape.mask(canvas.shape[0])] = shape.color
    return canvas


def render_scene(scene: Scene, rng: np.random.Generator, noise: bool = True) -> BiTemporalSample:
    size = scene.size
    texture = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=2.0)
    texture *= TEXTURE_STD / max(float(texture.std()), 1e-12)
    background = np.asarray(scene.background)[None, None, :] + texture[..., None]

    pre = _paint(background.copy(), scene.shapes)
    post = _paint(background.copy(), scene.post_shapes) + scene.shift
    if noise:
        pre = pre + rng.normal(0.0, NOISE_STD, size=pre.shape)
        post = post + rng.normal(0.0, NOISE_STD, size=post.shape)

    return BiTemporalSample(
        np.clip(pre, 0.0, 1.0).astype(np.float32),
        np.clip(post, 0.0, 1.0).astype(np.float32),
        scene.change_mask().astype(np.uint8),
    )


def check_synth_size(size: int) -> None:
    if size <= 0 or size % SIZE_MULTIPLE:
        raise ConfigError(f"synthetic image size must be a positive multiple of {SIZE_MULTIPLE}, got {size}")


def synth_generate(n: int, size: int, seed: int, edits: Optional[int] = None, noise: bool = True,
                   prefix: str = "synth", stream: int = 0) -> List[BiTemporalSample]:
    """`n` reproducible samples; sample i draws from default_rng([seed, stream, i])"""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    check_synth_size(size)

    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, stream, i])
        scene = random_scene(rng, size, edits)
        sample = render_scene(scene, rng, noise=noise)
        sample.name = f"{prefix}_{i:05d}"
        samples.append(sample)
    return samples
