"""Diver tracking, gesture-instruction decoding, and follow control toolkit."""

__version__ = "0.1.0"

from .core import (
    BoundingBox,
    DetectionResult,
    Frame,
    GridConfig,
    TrackerConfig,
    ValidationError,
)

__all__ = [
    "BoundingBox",
    "DetectionResult",
    "Frame",
    "GridConfig",
    "TrackerConfig",
    "ValidationError",
    "__version__",
]
