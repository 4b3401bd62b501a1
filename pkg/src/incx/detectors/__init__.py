from .base import (
    DEFAULT_CLASSES,
    DetectionVector,
    Detector,
    DetectorCallLog,
    LockedDetector,
    LoggedDetector,
    make_detection,
    one_hot_smoothed,
)
from .remote import DETECTOR_CMD_ENV, RemoteDetector
from .synthetic import (
    RectangleDetector,
    RectangleSpec,
    TopKPixelDetector,
    TopKPixelSpec,
    make_rectangle_detector,
    make_topk_pixel_detector,
)

__all__ = [
    "DEFAULT_CLASSES",
    "DETECTOR_CMD_ENV",
    "DetectionVector",
    "Detector",
    "DetectorCallLog",
    "LockedDetector",
    "LoggedDetector",
    "RectangleDetector",
    "RectangleSpec",
    "RemoteDetector",
    "TopKPixelDetector",
    "TopKPixelSpec",
    "make_detection",
    "make_rectangle_detector",
    "make_topk_pixel_detector",
    "one_hot_smoothed",
]
