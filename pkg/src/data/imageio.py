"""8-bit PNG reading and writing"""
from pathlib import Path
from typing import Tuple

import numpy as np
from PIL import Image

from src.core.errors import DatasetError

LABEL_ON = 255


def image_size(path: Path) -> Tuple[int, int]:
    """(H, W) from the PNG header only"""
    try:
        with Image.open(path) as img:
            width, height = img.size
    except (OSError, ValueError) as e:
        raise DatasetError(f"cannot read image {path}: {e}") from e
    return height, width


def read_rgb(path: Path) -> np.ndarray:
    """H×W×3 float32 in [0, 1]"""
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise DatasetError(f"cannot read image {path}: {e}") from e
    return data.astype(np.float32) / 255.0


def decode_label(data: np.ndarray, path: Path) -> np.ndarray:
    """{0, 255} grayscale -> {0, 1}; any other value is rejected"""
    values = np.unique(data)
    bad = values[(values != 0) & (values != LABEL_ON)]
    if bad.size:
        raise DatasetError(f"label {path} has values {bad.tolist()[:5]} outside the {{0, {LABEL_ON}}} encoding")
    return (data == LABEL_ON).astype(np.uint8)


def read_label(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("L"), dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise DatasetError(f"cannot read label {path}: {e}") from e
    return decode_label(data, path)


def write_rgb(path: Path, image: np.ndarray) -> None:
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path, format="PNG")


def write_mask(path: Path, mask: np.ndarray) -> None:
    """{0, 1} mask -> {0, 255} grayscale PNG"""
    data = np.where(np.asarray(mask) > 0, LABEL_ON, 0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path, format="PNG")
