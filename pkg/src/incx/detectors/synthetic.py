"""Synthetic detectors with closed-form behaviour, used as test oracles and
as the built-in detectors behind ``--detector synthetic:...``.

Both are pure functions of the pixel data: identical images always produce
identical detections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpec
from ..geometry import BBox
from ..images import Image
from .base import DEFAULT_CLASSES, Detector, DetectionVector, make_detection, one_hot_smoothed


@dataclass(frozen=True)
class RectangleSpec:
    """Target of the rectangle detector: a solid block of one RGB color.

    ``expected_area`` is the nominal pixel count of the fully visible
    rectangle; visibility is measured against it, so partial occlusion
    lowers objectness proportionally and growth saturates it at 1.
    """

    color: tuple[int, int, int]
    class_id: int = 0
    theta: float = 0.5
    expected_area: int = 0
    classes: tuple[str, ...] = DEFAULT_CLASSES

    def validate(self) -> None:
        if not (0.0 < self.theta <= 1.0):
            raise InvalidSpec(f"visibility threshold {self.theta} outside (0, 1]")
        if self.expected_area <= 0:
            raise InvalidSpec("expected_area must be a positive pixel count")
        if len(self.color) != 3 or not all(0 <= c <= 255 for c in self.color):
            raise InvalidSpec(f"bad RGB color {self.color}")
        if not 0 <= self.class_id < len(self.classes):
            raise InvalidSpec(f"class id {self.class_id} outside vocabulary")


class RectangleDetector(Detector):
    """Scans for pixels exactly matching the target color; reports the tight
    box around them iff visibility >= theta, with objectness
    min(1, visible/expected)."""

    def __init__(self, spec: RectangleSpec):
        spec.validate()
        self.spec = spec
        self.classes = spec.classes
        self._color = np.array(spec.color, dtype=np.uint8)

    def detect(self, img: Image) -> list[DetectionVector]:
        match = np.all(img.pixels == self._color[None, None, :], axis=2)
        count = int(match.sum())
        if count == 0:
            return []
        visibility = count / self.spec.expected_area
        if visibility < self.spec.theta:
            return []
        rows = np.flatnonzero(match.any(axis=1))
        cols = np.flatnonzero(match.any(axis=0))
        bbox = BBox(float(cols[0]), float(rows[0]),
                    float(cols[-1] + 1), float(rows[-1] + 1))
        probs = one_hot_smoothed(self.spec.class_id, len(self.classes))
        return [make_detection(bbox, min(1.0, visibility), probs)]


def make_rectangle_detector(spec: RectangleSpec) -> RectangleDetector:
    return RectangleDetector(spec)


@dataclass(frozen=True)
class TopKPixelSpec:
    """Designated pixels plus the count of them that must stay visible."""

    pixels: tuple[tuple[int, int], ...]  # (ix, iy)
    k: int
    bbox: BBox | None = None  # fixed reported box; tight box of pixels if None
    class_id: int = 0
    classes: tuple[str, ...] = DEFAULT_CLASSES

    def validate(self) -> None:
        if not self.pixels:
            raise InvalidSpec("no designated pixels")
        if not 1 <= self.k <= len(self.pixels):
            raise InvalidSpec(f"k={self.k} outside 1..{len(self.pixels)}")
        if not 0 <= self.class_id < len(self.classes):
            raise InvalidSpec(f"class id {self.class_id} outside vocabulary")


class TopKPixelDetector(Detector):
    """Fires a fixed detection iff at least k designated pixels are non-black.

    Strictly monotone in the revealed-pixel set by construction, which makes
    it the reference detector for threshold-search tests.
    """

    def __init__(self, spec: TopKPixelSpec):
        spec.validate()
        self.spec = spec
        self.classes = spec.classes
        # k can be reassigned mid-scenario to model a detector that tightens.
        self.k = spec.k
        self._ix = np.array([p[0] for p in spec.pixels], dtype=np.int64)
        self._iy = np.array([p[1] for p in spec.pixels], dtype=np.int64)
        if spec.bbox is not None:
            self._bbox = spec.bbox
        else:
            self._bbox = BBox(float(self._ix.min()), float(self._iy.min()),
                              float(self._ix.max() + 1), float(self._iy.max() + 1))
        self._probs = one_hot_smoothed(spec.class_id, len(self.classes))

    def visible_count(self, img: Image) -> int:
        samples = img.pixels[self._iy, self._ix]
        return int(np.any(samples > 0, axis=1).sum())

    def detect(self, img: Image) -> list[DetectionVector]:
        if self.visible_count(img) < self.k:
            return []
        return [make_detection(self._bbox, 1.0, self._probs)]


def make_topk_pixel_detector(designated, k: int, bbox: BBox | None = None,
                             class_id: int = 0) -> TopKPixelDetector:
    """Build a top-k detector from designated pixels.

    ``designated`` is either an iterable of (ix, iy) pairs or a boolean
    (h, w) array marking the pixels.
    """
    if isinstance(designated, np.ndarray):
        ys, xs = np.nonzero(designated)
        pixels = tuple((int(x), int(y)) for x, y in zip(xs, ys))
    else:
        pixels = tuple((int(x), int(y)) for x, y in designated)
    return TopKPixelDetector(TopKPixelSpec(pixels=pixels, k=k, bbox=bbox,
                                           class_id=class_id))
