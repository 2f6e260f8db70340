"""Training-time augmentation of bi-temporal samples.

Geometric transforms (flips, rescale + crop) move pre, post and label
together; the label is resampled nearest-neighbour so it stays binary.
Photometric transforms (blur, colour jitter) touch the two images
independently and never the label.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy import ndimage

from src.core.models import AugmentConfig
from .samples import BiTemporalSample

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def hflip(sample: BiTemporalSample) -> BiTemporalSample:
    return sample.with_arrays(sample.pre[:, ::-1].copy(), sample.post[:, ::-1].copy(), sample.label[:, ::-1].copy())


def vflip(sample: BiTemporalSample) -> BiTemporalSample:
    return sample.with_arrays(sample.pre[::-1].copy(), sample.post[::-1].copy(), sample.label[::-1].copy())


def draw_rescale_factor(rng: np.random.Generator, bounds: Tuple[float, float] = (0.8, 1.2)) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def _fit(array: np.ndarray, height: int, width: int, top: int, left: int) -> np.ndarray:
    """Reflect-pad up to at least height×width, then crop at (top, left)"""
    pad_h, pad_w = max(height - array.shape[0], 0), max(width - array.shape[1], 0)
    if pad_h or pad_w:
        pad = [(pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)]
        pad += [(0, 0)] * (array.ndim - 2)
        array = np.pad(array, pad, mode="reflect")
    return np.ascontiguousarray(array[top:top + height, left:left + width])


def rescale_crop(sample: BiTemporalSample, factor: float, rng: np.random.Generator) -> BiTemporalSample:
    """Zoom by `factor`, then random-crop (or reflect-pad) back to the original size"""
    height, width = sample.size
    pre = ndimage.zoom(sample.pre, (factor, factor, 1), order=1)
    post = ndimage.zoom(sample.post, (factor, factor, 1), order=1)
    label = ndimage.zoom(sample.label, (factor, factor), order=0)

    top = int(rng.integers(0, max(pre.shape[0] - height, 0) + 1))
    left = int(rng.integers(0, max(pre.shape[1] - width, 0) + 1))
    return sample.with_arrays(
        np.clip(_fit(pre, height, width, top, left), 0.0, 1.0),
        np.clip(_fit(post, height, width, top, left), 0.0, 1.0),
        _fit(label, height, width, top, left),
    )


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return image
    return ndimage.gaussian_filter(image, sigma=(sigma, sigma, 0), mode="reflect")


def color_jitter(image: np.ndarray, rng: np.random.Generator, config: AugmentConfig) -> np.ndarray:
    """Brightness, contrast and saturation factors each uniform in [1 − a, 1 + a]"""
    brightness = rng.uniform(1 - config.brightness, 1 + config.brightness)
    contrast = rng.uniform(1 - config.contrast, 1 + config.contrast)
    saturation = rng.uniform(1 - config.saturation, 1 + config.saturation)

    out = image * brightness
    gray = out @ _LUMA
    out = (out - gray.mean()) * contrast + gray.mean()
    gray = (out @ _LUMA)[..., None]
    out = (out - gray) * saturation + gray
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _photometric(image: np.ndarray, rng: np.random.Generator, config: AugmentConfig) -> np.ndarray:
    if rng.random() < config.blur_p:
        image = gaussian_blur(image, float(rng.uniform(0.0, config.blur_sigma_max)))
    if rng.random() < config.jitter_p:
        image = color_jitter(image, rng, config)
    return image


def augment(sample: BiTemporalSample, rng: np.random.Generator, config: AugmentConfig = None) -> BiTemporalSample:
    """Apply each transform with its own probability, in a fixed order"""
    config = config or AugmentConfig()
    if not config.enabled:
        return sample

    if rng.random() < config.hflip_p:
        sample = hflip(sample)
    if rng.random() < config.vflip_p:
        sample = vflip(sample)
    if rng.random() < config.rescale_p:
        sample = rescale_crop(sample, draw_rescale_factor(rng, config.rescale_range), rng)

    return sample.with_arrays(
        pre=_photometric(sample.pre, rng, config),
        post=_photometric(sample.post, rng, config),
    )
