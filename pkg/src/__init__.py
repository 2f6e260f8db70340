"""cdkit: Siamese transformer change detection on a numpy autodiff core"""

__version__ = "1.0.0"
