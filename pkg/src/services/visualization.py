"""Visualization service for change masks"""
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class VisualizationService:
    """Service for rendering pre | post | mask [| label] preview panels"""

    def __init__(self, dpi: int = 100):
        self.dpi = dpi

    def render_preview(
        self,
        path: Path,
        pre: np.ndarray,
        post: np.ndarray,
        mask: np.ndarray,
        label: Optional[np.ndarray] = None,
        title: str = None,
    ) -> Path:
        """
        Save a side-by-side panel as PNG

        Args:
            path: Output image path
            pre: H×W×3 pre-change image in [0, 1]
            post: H×W×3 post-change image in [0, 1]
            mask: H×W predicted {0, 1} change mask
            label: Optional H×W ground-truth mask
            title: Optional figure title

        Returns:
            The written path
        """
        panels = [("pre", pre, None), ("post", post, None), ("prediction", mask, "gray")]
        if label is not None:
            panels.append(("label", label, "gray"))

        fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3.2))
        for ax, (name, image, cmap) in zip(axes, panels):
            ax.imshow(np.clip(image, 0, 1), cmap=cmap, vmin=0, vmax=1)
            ax.set_title(name)
            ax.axis("off")
        if title:
            fig.suptitle(title)
        fig.tight_layout()

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=self.dpi)
        plt.close(fig)
        return path
