"""Evaluation metrics: normalized insertion/deletion curves, energy inside
the box, explanation compactness, and the field/mask similarity scores.

Curve metrics query the detector on progressively revealed (or removed)
pixels in saliency order and normalize every score by the full-image score,
so the normalized curve can exceed 1 when a pixel subset is more convincing
than the whole frame. Scores are adjusted by the IoU with the original box
so that they stay tied to the object being explained rather than any
instance of the class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors.base import Detector, DetectionVector
from .errors import ConstantField, FieldMismatch, ZeroFullImageScore, ZeroMass
from .explain import ExplanationMask
from .geometry import BBox, iou
from .images import Image, occlude_except
from .saliency import SaliencyField, mass_inside

DEFAULT_CURVE_STEPS = 100
CURVE_BATCH = 16

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class Curve:
    """Score versus revealed/removed pixel fraction; xs from 0 to 1."""

    xs: np.ndarray
    ys: np.ndarray

    def auc(self) -> float:
        return float(np.trapezoid(self.ys, self.xs))


@dataclass
class MetricReport:
    insertion: float | None = None
    deletion: float | None = None
    epg: float | None = None
    ep: float | None = None
    cc: float | None = None
    ssim: float | None = None
    ji: float | None = None
    dc: float | None = None
    detector_calls: int = 0
    wall_ms: float = 0.0

    def as_row(self, frame: int, track_id: int) -> dict:
        return {
            "frame": frame,
            "track_id": track_id,
            "insertion": self.insertion,
            "deletion": self.deletion,
            "epg": self.epg,
            "ep": self.ep,
            "cc": self.cc,
            "ssim": self.ssim,
            "ji": self.ji,
            "dc": self.dc,
            "detector_calls": self.detector_calls,
            "wall_ms": self.wall_ms,
        }


def _target_score(detections: list[DetectionVector],
                  target: DetectionVector) -> float:
    """Class probability of the target label, scaled by box IoU; max over
    detections, 0 when none."""
    best = 0.0
    for det in detections:
        if target.label >= det.class_probs.size:
            continue
        score = float(det.class_probs[target.label]) * iou(det.bbox, target.bbox)
        if score > best:
            best = score
    return best


def saliency_ranking(field: SaliencyField) -> np.ndarray:
    """Flat pixel indices in descending saliency; ties row-major."""
    return np.argsort(-field.values.ravel(), kind="stable")


def _curve(img: Image, field: SaliencyField, detector: Detector,
           target: DetectionVector, steps: int, insert: bool) -> tuple[Curve, float]:
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    if (field.height, field.width) != (img.height, img.width):
        raise FieldMismatch("field and image dimensions differ")
    full_score = _target_score(detector.detect(img), target)
    if full_score == 0.0:
        raise ZeroFullImageScore(
            "the detector does not produce the target on the full image")

    order = saliency_ranking(field)
    n = order.size
    xs = np.arange(steps + 1, dtype=np.float64) / steps
    counts = np.rint(xs * n).astype(np.int64)

    frames: list[Image] = []
    for count in counts:
        keep = np.zeros(n, dtype=bool)
        if insert:
            keep[order[:count]] = True
        else:
            keep[:] = True
            keep[order[:count]] = False
        frames.append(occlude_except(img, keep.reshape(field.values.shape)))

    ys = np.empty(steps + 1, dtype=np.float64)
    for start in range(0, len(frames), CURVE_BATCH):
        chunk = frames[start:start + CURVE_BATCH]
        for j, dets in enumerate(detector.detect_batch(chunk)):
            ys[start + j] = _target_score(dets, target) / full_score
    return Curve(xs=xs, ys=ys), float(np.trapezoid(ys, xs))


def insertion(img: Image, field: SaliencyField, detector: Detector,
              target: DetectionVector,
              steps: int = DEFAULT_CURVE_STEPS) -> tuple[Curve, float]:
    """Reveal pixels over black, most salient first."""
    return _curve(img, field, detector, target, steps, insert=True)


def deletion(img: Image, field: SaliencyField, detector: Detector,
             target: DetectionVector,
             steps: int = DEFAULT_CURVE_STEPS) -> tuple[Curve, float]:
    """Remove pixels from the full image, most salient first."""
    return _curve(img, field, detector, target, steps, insert=False)


def epg(field: SaliencyField, bbox: BBox) -> float:
    """Fraction of the field's total mass inside the box."""
    total = field.total_mass()
    if total <= 0.0:
        raise ZeroMass("EPG is undefined for a field with zero mass")
    return mass_inside(field, bbox) / total


def explanation_proportion(mask: ExplanationMask) -> float:
    """Explanation pixels over all pixels; lower is more compact."""
    return float(mask.bits.mean())


def _field_values(x) -> np.ndarray:
    if isinstance(x, SaliencyField):
        return x.values
    return np.asarray(x, dtype=np.float64)


def pearson_cc(a, b) -> float:
    va = _field_values(a).ravel()
    vb = _field_values(b).ravel()
    if va.shape != vb.shape:
        raise FieldMismatch("fields must share dimensions for correlation")
    if float(va.std()) == 0.0 or float(vb.std()) == 0.0:
        raise ConstantField("correlation is undefined for a constant field")
    return float(np.corrcoef(va, vb)[0, 1])


def _gaussian_kernel_1d(radius: int, sigma: float) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation, valid region only."""
    from scipy.ndimage import correlate1d

    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    r = (kernel.size - 1) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(a, b) -> float:
    """Mean local structural similarity with the canonical parameters:
    11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range
    taken from the data. Two identical constant fields score 1."""
    va = _field_values(a)
    vb = _field_values(b)
    if va.shape != vb.shape:
        raise FieldMismatch("fields must share dimensions for SSIM")
    if min(va.shape) < SSIM_WINDOW:
        raise FieldMismatch(
            f"fields of shape {va.shape} are smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    data_range = float(max(va.max(), vb.max()) - min(va.min(), vb.min()))
    if data_range == 0.0:
        return 1.0  # both fields constant and equal

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    kernel = _gaussian_kernel_1d((SSIM_WINDOW - 1) // 2, SSIM_SIGMA)

    mu_a = _filter_valid(va, kernel)
    mu_b = _filter_valid(vb, kernel)
    var_a = _filter_valid(va * va, kernel) - mu_a * mu_a
    var_b = _filter_valid(vb * vb, kernel) - mu_b * mu_b
    cov = _filter_valid(va * vb, kernel) - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _mask_bits(x) -> np.ndarray:
    if isinstance(x, ExplanationMask):
        return x.bits
    return np.asarray(x, dtype=bool)


def jaccard(a, b) -> float:
    """|a n b| / |a u b|; two empty masks count as identical (1.0)."""
    ba = _mask_bits(a)
    bb = _mask_bits(b)
    if ba.shape != bb.shape:
        raise FieldMismatch("masks must share dimensions")
    union = int(np.logical_or(ba, bb).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(ba, bb).sum()) / union


def dice(a, b) -> float:
    """2|a n b| / (|a| + |b|); two empty masks count as identical (1.0)."""
    ba = _mask_bits(a)
    bb = _mask_bits(b)
    if ba.shape != bb.shape:
        raise FieldMismatch("masks must share dimensions")
    size_sum = int(ba.sum()) + int(bb.sum())
    if size_sum == 0:
        return 1.0
    return 2.0 * int(np.logical_and(ba, bb).sum()) / size_sum
