"""Frame-to-frame identity: Kalman prediction, IoU assignment, lifecycle.

Classic SORT semantics: each track carries a constant-velocity Kalman state
over [center_u, center_v, area, aspect, and their velocities] (aspect held
constant); predictions are associated to fresh detections by maximizing IoU
through a min-cost assignment; unmatched detections are born as new tracks
and tracks missing for more than ``timeout`` consecutive frames retire.
Track ids are monotone and never reused within a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detectors.base import DetectionVector
from .geometry import BBox, iou

STATE_EPS = 1e-6


# Canonical constant-velocity noise profile: unit position/scale measurement
# noise (scale/aspect looser), small process noise on velocities, and a very
# uncertain initial velocity.
MEASUREMENT_NOISE = (1.0, 1.0, 10.0, 10.0)
PROCESS_NOISE = (1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001)
INITIAL_COVARIANCE = (10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4)


@dataclass(frozen=True)
class TrackerConfig:
    iou_min: float = 0.3
    timeout: int = 5  # consecutive misses before retirement
    measurement_noise: tuple[float, ...] = MEASUREMENT_NOISE  # diag over [u,v,s,r]
    process_noise: tuple[float, ...] = PROCESS_NOISE          # diag over the state

    def validate(self) -> None:
        if not (0.0 < self.iou_min < 1.0):
            raise ValueError(f"iou_min {self.iou_min} outside (0, 1)")
        if self.timeout < 0:
            raise ValueError(f"timeout {self.timeout} must be >= 0")
        if len(self.measurement_noise) != 4 or any(x <= 0 for x in self.measurement_noise):
            raise ValueError("measurement_noise must be 4 positive diagonals")
        if len(self.process_noise) != 7 or any(x <= 0 for x in self.process_noise):
            raise ValueError("process_noise must be 7 positive diagonals")


def _bbox_to_z(b: BBox) -> np.ndarray:
    w = max(b.width, STATE_EPS)
    h = max(b.height, STATE_EPS)
    return np.array([b.u_min + b.width / 2.0, b.v_min + b.height / 2.0,
                     w * h, w / h], dtype=np.float64)


def _z_to_bbox(z: np.ndarray) -> BBox:
    s = max(float(z[2]), STATE_EPS)
    r = max(float(z[3]), STATE_EPS)
    w = np.sqrt(s * r)
    h = s / w
    return BBox(float(z[0] - w / 2.0), float(z[1] - h / 2.0),
                float(z[0] + w / 2.0), float(z[1] + h / 2.0))


class KalmanTrack:
    """Constant-velocity Kalman filter over one object's box.

    State x = [u, v, s, r, du, dv, ds]; measurements are [u, v, s, r].
    """

    _F = np.eye(7)
    _F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
    _H = np.zeros((4, 7))
    _H[0, 0] = _H[1, 1] = _H[2, 2] = _H[3, 3] = 1.0

    def __init__(self, bbox: BBox, track_id: int,
                 measurement_noise=MEASUREMENT_NOISE,
                 process_noise=PROCESS_NOISE):
        self.track_id = track_id
        self.state = np.zeros(7, dtype=np.float64)
        self.state[:4] = _bbox_to_z(bbox)
        self.covariance = np.diag(INITIAL_COVARIANCE).astype(np.float64)
        self._Q = np.diag(process_noise).astype(np.float64)
        self._R = np.diag(measurement_noise).astype(np.float64)
        self.age = 0
        self.hits = 1
        self.misses = 0
        self.last_box = bbox  # most recent *measured* box
        self.scale_clamped = False

    def predict(self) -> BBox:
        """Advance one frame and return the state-implied box.

        A predicted non-positive area is clamped to epsilon and flagged
        rather than raised; the track stays usable for association.
        """
        if self.state[2] + self.state[6] <= 0.0:
            self.state[6] = 0.0
            self.scale_clamped = True
        self.state = self._F @ self.state
        if self.state[2] <= 0.0:
            self.state[2] = STATE_EPS
            self.scale_clamped = True
        self.covariance = self._F @ self.covariance @ self._F.T + self._Q
        self.age += 1
        return self.bbox

    def update(self, bbox: BBox) -> None:
        z = _bbox_to_z(bbox)
        y = z - self._H @ self.state
        S = self._H @ self.covariance @ self._H.T + self._R
        K = self.covariance @ self._H.T @ np.linalg.inv(S)
        self.state = self.state + K @ y
        I_KH = np.eye(7) - K @ self._H
        # Joseph form keeps the covariance symmetric PSD under roundoff.
        self.covariance = (I_KH @ self.covariance @ I_KH.T
                           + K @ self._R @ K.T)
        self.hits += 1
        self.misses = 0
        self.last_box = bbox

    @property
    def bbox(self) -> BBox:
        return _z_to_bbox(self.state)


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Min-cost one-to-one assignment over a finite cost matrix.

    Rectangular matrices are allowed; all of the smaller dimension is
    matched. (Equivalent to padding square with a cost exceeding every real
    entry and discarding padded pairs.)
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("assignment costs must be finite")
    rows, cols = linear_sum_assignment(cost)
    return sorted(zip(rows.tolist(), cols.tolist()))


@dataclass
class Assignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def associate(predicted: list[BBox], detections: list[BBox],
              iou_min: float) -> Assignment:
    """Assign detections to predicted boxes by Hungarian over cost 1 - IoU;
    pairs overlapping less than ``iou_min`` are demoted to unmatched."""
    if not predicted or not detections:
        return Assignment(unmatched_tracks=list(range(len(predicted))),
                          unmatched_detections=list(range(len(detections))))
    overlap = np.array([[iou(p, d) for d in detections] for p in predicted])
    pairs = hungarian(1.0 - overlap)
    kept = [(ti, di) for ti, di in pairs if overlap[ti, di] >= iou_min]
    matched_t = {ti for ti, _ in kept}
    matched_d = {di for _, di in kept}
    return Assignment(
        pairs=kept,
        unmatched_tracks=[i for i in range(len(predicted)) if i not in matched_t],
        unmatched_detections=[i for i in range(len(detections)) if i not in matched_d],
    )


@dataclass
class TrackerStep:
    matched: list[tuple[KalmanTrack, DetectionVector]]
    born: list[tuple[KalmanTrack, DetectionVector]]
    retired: list[KalmanTrack]
    missed: list[KalmanTrack]


class SortTracker:
    """Owns the live track set; one instance per pipeline, single-threaded."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.config.validate()
        self.tracks: list[KalmanTrack] = []
        self._next_id = 0

    @property
    def ids_issued(self) -> int:
        """How many distinct track ids have ever been handed out."""
        return self._next_id

    def step(self, detections: list[DetectionVector]) -> TrackerStep:
        predicted = [t.predict() for t in self.tracks]
        det_boxes = [d.bbox for d in detections]
        assignment = associate(predicted, det_boxes, self.config.iou_min)

        matched: list[tuple[KalmanTrack, DetectionVector]] = []
        for ti, di in assignment.pairs:
            track = self.tracks[ti]
            track.update(detections[di].bbox)
            matched.append((track, detections[di]))

        missed: list[KalmanTrack] = []
        for ti in assignment.unmatched_tracks:
            track = self.tracks[ti]
            track.misses += 1
            missed.append(track)

        retired = [t for t in self.tracks if t.misses > self.config.timeout]
        self.tracks = [t for t in self.tracks if t.misses <= self.config.timeout]

        born: list[tuple[KalmanTrack, DetectionVector]] = []
        for di in assignment.unmatched_detections:
            track = KalmanTrack(detections[di].bbox, self._next_id,
                                measurement_noise=self.config.measurement_noise,
                                process_noise=self.config.process_noise)
            self._next_id += 1
            self.tracks.append(track)
            born.append((track, detections[di]))

        return TrackerStep(matched=matched, born=born, retired=retired,
                           missed=missed)
