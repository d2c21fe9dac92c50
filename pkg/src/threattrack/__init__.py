"""threattrack: observation-centric person tracking gated by weapon detections,
with a full evaluation suite and synthetic-data post-processing."""

__version__ = "0.1.0"

from .geometry import BBox, containment_ratio, iou
from .tracker import (
    ClassId,
    Detection,
    FrameResult,
    ShooterTracker,
    TrackerConfig,
    confirm_with_gun,
    run_sequence,
)

__all__ = [
    "__version__",
    "BBox",
    "iou",
    "containment_ratio",
    "ClassId",
    "Detection",
    "FrameResult",
    "ShooterTracker",
    "TrackerConfig",
    "confirm_with_gun",
    "run_sequence",
]
