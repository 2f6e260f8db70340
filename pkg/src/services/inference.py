"""Inference service: image pair -> change mask PNG"""
from pathlib import Path
from typing import Optional

import numpy as np

from src.core.errors import ShapeError
from src.core.log import get_logger
from src.data import read_rgb, write_mask
from src.model import ChangeFormer
from src.numerics.tensor import Tensor, no_grad
from .visualization import VisualizationService

logger = get_logger(__name__)


class InferenceService:
    """Service for predicting change masks with a trained model"""

    def __init__(self, model: ChangeFormer):
        self.model = model

    def logits(self, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
        if pre.shape != post.shape:
            raise ShapeError(f"pre image {pre.shape[:2]} and post image {post.shape[:2]} differ in size")
        with no_grad():
            out = self.model(Tensor(pre, dtype=self.model.dtype), Tensor(post, dtype=self.model.dtype))
        return out.data

    def infer(
        self,
        pre_path: Path,
        post_path: Path,
        out_path: Path,
        logits_path: Optional[Path] = None,
        preview_path: Optional[Path] = None,
    ) -> np.ndarray:
        """
        Predict and write the {0, 255} mask at the input resolution

        Args:
            pre_path: Pre-change RGB PNG
            post_path: Post-change RGB PNG
            out_path: Mask PNG to write
            logits_path: Optional .npy dump of the raw H×W×2 logits
            preview_path: Optional matplotlib panel

        Returns:
            The {0, 1} mask
        """
        pre, post = read_rgb(pre_path), read_rgb(post_path)
        logits = self.logits(pre, post)
        mask = np.argmax(logits, axis=-1).astype(np.uint8)

        write_mask(out_path, mask)
        if logits_path is not None:
            Path(logits_path).parent.mkdir(parents=True, exist_ok=True)
            np.save(logits_path, logits)
        if preview_path is not None:
            VisualizationService().render_preview(preview_path, pre, post, mask)

        logger.info("wrote %dx%d change mask to %s (%d change pixels)",
                    mask.shape[0], mask.shape[1], out_path, int(mask.sum()))
        return mask
