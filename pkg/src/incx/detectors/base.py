"""The black-box detector contract and call accounting.

A detector consumes an RGB frame and returns zero or more detection
vectors: a box, an objectness score, and a class-probability vector. The
engine never looks inside the detector; everything downstream (bootstrap
weighting, sufficiency checks, metrics) is built on this surface alone.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidSpec
from ..geometry import BBox
from ..images import Image

DEFAULT_CLASSES = ("square", "disc", "bar", "stripe")  # toy 4-class vocabulary


@dataclass
class DetectionVector:
    bbox: BBox
    objectness: float
    class_probs: np.ndarray
    label: int

    def __post_init__(self) -> None:
        self.class_probs = np.asarray(self.class_probs, dtype=np.float64)
        if self.class_probs.ndim != 1 or self.class_probs.size == 0:
            raise ValueError("class_probs must be a non-empty vector")
        if np.any(self.class_probs < 0.0) or np.any(self.class_probs > 1.0):
            raise ValueError("class probabilities must lie in [0, 1]")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness {self.objectness} outside [0, 1]")
        if self.label != int(np.argmax(self.class_probs)):
            raise ValueError("label must be the argmax class")


def make_detection(bbox: BBox, objectness: float, class_probs) -> DetectionVector:
    probs = np.asarray(class_probs, dtype=np.float64)
    return DetectionVector(bbox, float(objectness), probs, int(np.argmax(probs)))


def one_hot_smoothed(class_id: int, n_classes: int, eps: float = 0.01) -> np.ndarray:
    """Near-one-hot probability vector; keeps cosine similarity well defined."""
    if not 0 <= class_id < n_classes:
        raise InvalidSpec(f"class id {class_id} outside vocabulary of {n_classes}")
    probs = np.full(n_classes, eps, dtype=np.float64)
    probs[class_id] = 1.0 - eps * (n_classes - 1)
    return probs


@dataclass
class DetectorCallLog:
    """Monotone counters for detector usage; `calls` counts images evaluated,
    which for the wire protocol equals round trips (one image per request)."""

    calls: int = 0
    batch_sizes: list[int] = field(default_factory=list)
    wall_seconds: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    def record(self, n_images: int, seconds: float) -> None:
        with self._lock:
            self.calls += n_images
            self.batch_sizes.append(n_images)
            self.wall_seconds.append(seconds)

    def total_seconds(self) -> float:
        return float(sum(self.wall_seconds))


class Detector:
    """Base detector. Subclasses implement ``detect``; ``detect_batch``
    defaults to a loop and preserves order."""

    classes: tuple[str, ...] = DEFAULT_CLASSES

    def detect(self, img: Image) -> list[DetectionVector]:
        raise NotImplementedError

    def detect_batch(self, imgs: list[Image]) -> list[list[DetectionVector]]:
        if not imgs:
            raise ValueError("detect_batch requires a non-empty batch")
        return [self.detect(img) for img in imgs]

    def close(self) -> None:  # pragma: no cover - default no-op
        pass


class LoggedDetector(Detector):
    """Wraps any detector and records every call in a DetectorCallLog."""

    def __init__(self, inner: Detector, log: DetectorCallLog | None = None):
        self.inner = inner
        self.log = log if log is not None else DetectorCallLog()
        self.classes = inner.classes

    def detect(self, img: Image) -> list[DetectionVector]:
        t0 = time.perf_counter()
        out = self.inner.detect(img)
        self.log.record(1, time.perf_counter() - t0)
        return out

    def detect_batch(self, imgs: list[Image]) -> list[list[DetectionVector]]:
        t0 = time.perf_counter()
        out = self.inner.detect_batch(imgs)
        self.log.record(len(imgs), time.perf_counter() - t0)
        return out

    def close(self) -> None:
        self.inner.close()


class LockedDetector(Detector):
    """Serializes access to a handle that is only safe for one caller at a
    time (e.g. the wire-protocol client). Synthetic detectors are reentrant
    and do not need this."""

    def __init__(self, inner: Detector):
        self.inner = inner
        self.classes = inner.classes
        self._lock = threading.Lock()

    def detect(self, img: Image) -> list[DetectionVector]:
        with self._lock:
            return self.inner.detect(img)

    def detect_batch(self, imgs: list[Image]) -> list[list[DetectionVector]]:
        with self._lock:
            return self.inner.detect_batch(imgs)

    def close(self) -> None:
        with self._lock:
            self.inner.close()
