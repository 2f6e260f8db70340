"""Configuration management for the cdkit change-detection toolkit"""
import os
from pathlib import Path
from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()


class Config:
    """Centralized environment configuration"""

    # Base paths
    BASE_DIR = Path(__file__).parent.parent.parent
    OUTPUT_DIR = Path(os.getenv("CDKIT_OUTPUT_DIR", BASE_DIR / "runs"))

    # Numeric mode: float32 for training, float64 for gradient checks and bitwise runs
    DTYPE = os.getenv("CDKIT_DTYPE", "float32")

    # Application Settings
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    VERSION = "1.0.0"

    # Display settings
    BANNER_WIDTH = 80
    SEPARATOR_CHAR = "="

    @classmethod
    def validate(cls):
        """Validate environment-provided settings"""
        if cls.DTYPE not in ("float32", "float64"):
            raise ConfigError(
                f"CDKIT_DTYPE must be 'float32' or 'float64', got {cls.DTYPE!r}"
            )
