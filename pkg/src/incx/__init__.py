"""incx: incremental real-time explanations for black-box object detectors.

Bootstraps a saliency map once per tracked object, propagates it
frame-to-frame with a closed-form scale/translation warp, extracts
sufficient explanations by monotone threshold search, and scores the
results with the standard saliency metric suite.
"""

from .config import PipelineConfig, config_from_dict, load_config
from .detectors import DetectionVector, Detector
from .explain import ExplanationMask, SearchConfig, explain
from .geometry import BBox, Point2, ScaleTranslate, bbox_center, iou, transform_from_boxes
from .images import Image
from .pipeline import PipelineSession
from .runner import run
from .saliency import SaliencyField, normalize, warp

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DetectionVector",
    "Detector",
    "ExplanationMask",
    "Image",
    "PipelineConfig",
    "PipelineSession",
    "Point2",
    "SaliencyField",
    "ScaleTranslate",
    "SearchConfig",
    "bbox_center",
    "config_from_dict",
    "explain",
    "iou",
    "load_config",
    "normalize",
    "run",
    "transform_from_boxes",
    "warp",
    "__version__",
]
