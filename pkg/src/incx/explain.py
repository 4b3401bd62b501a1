"""Sufficient-explanation extraction by threshold search over the saliency
field.

An explanation is the set of pixels whose saliency clears a threshold; it is
sufficient when the detector, shown only those pixels (everything else
black), still produces the original detection (same class, box IoU above the
match threshold). Sufficiency is monotone in the threshold — lowering it
only reveals more — so the largest sufficient threshold on a level grid can
be found by binary search. The first frame searches the field's full value
range; subsequent frames search a small multiplicative window around the
previous threshold and fall back to the previous mask when nothing in the
window suffices.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .detectors.base import Detector, DetectionVector
from .errors import InputOutputError, NoSufficientLevel
from .geometry import iou
from .images import Image, occlude_except
from .saliency import SaliencyField

MASK_SUFFIX = ".msk"
SIDECAR_SUFFIX = ".json"


@dataclass(frozen=True)
class SearchConfig:
    levels_initial: int = 32   # divisions of the full value range (first frame)
    levels_update: int = 8     # divisions of the windowed range (later frames)
    margin: float = 0.1        # relative half-width of the threshold window
    iou_match: float = 0.5     # box overlap required to count as "same detection"

    def validate(self) -> None:
        if self.levels_initial < 2 or self.levels_update < 2:
            raise ValueError("level counts must be >= 2")
        if self.margin <= 0.0:
            raise ValueError(f"margin {self.margin} must be positive")
        if not (0.0 < self.iou_match < 1.0):
            raise ValueError(f"iou_match {self.iou_match} outside (0, 1)")


@dataclass
class ExplanationMask:
    """Boolean per-pixel mask plus the threshold that produced it.

    Unless ``fallback_used``, bits are exactly ``saliency >= threshold``
    (ties included); with fallback, bits are carried over from the previous
    frame and ``sufficient`` reflects a re-check on the current frame.
    """

    bits: np.ndarray
    threshold: float
    sufficient: bool
    fallback_used: bool = False

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.bits.shape}")

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])


def threshold_mask(field: SaliencyField, threshold: float) -> np.ndarray:
    return field.values >= threshold


def mask_sufficiency(bits: np.ndarray, img: Image, detector: Detector,
                     target: DetectionVector, cfg: SearchConfig) -> bool:
    """Does the detector still produce the target detection when everything
    outside ``bits`` is occluded?"""
    masked = occlude_except(img, bits)
    for det in detector.detect(masked):
        if det.label == target.label and iou(det.bbox, target.bbox) >= cfg.iou_match:
            return True
    return False


def sufficiency_check(field: SaliencyField, threshold: float, img: Image,
                      detector: Detector, target: DetectionVector,
                      cfg: SearchConfig) -> bool:
    return mask_sufficiency(threshold_mask(field, threshold), img, detector,
                            target, cfg)


def binary_search_threshold(
    field: SaliencyField,
    levels: Sequence[float],
    check: Callable[[float], bool],
) -> tuple[float, np.ndarray]:
    """Largest level whose check passes, in O(log n) check invocations.

    The lowest level is probed first: if even it fails, nothing can pass
    (NoSufficientLevel) and only one check was spent. Otherwise the search
    keeps the invariant "lowest index of the current range is known to
    pass", so the converged index is already verified — no extra final
    check. Results are memoized by level value, so duplicate levels cost
    one invocation.
    """
    if len(levels) < 2:
        raise ValueError("need at least two levels to search")
    if any(levels[i] > levels[i + 1] for i in range(len(levels) - 1)):
        raise ValueError("levels must be sorted ascending")

    memo: dict[float, bool] = {}

    def cached(level: float) -> bool:
        level = float(level)
        if level not in memo:
            memo[level] = bool(check(level))
        return memo[level]

    if not cached(levels[0]):
        raise NoSufficientLevel(
            f"no sufficient explanation at any of {len(levels)} levels "
            f"(even {levels[0]!r} fails)")

    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if cached(levels[mid]):
            lo = mid
        else:
            hi = mid - 1
    threshold = float(levels[lo])
    return threshold, threshold_mask(field, threshold)


def _search_levels(field: SaliencyField, prev_threshold: float | None,
                   cfg: SearchConfig) -> np.ndarray:
    fmin = float(field.values.min())
    fmax = float(field.values.max())
    if prev_threshold is None:
        return np.linspace(fmin, fmax, cfg.levels_initial)
    if prev_threshold == 0.0:
        # A multiplicative margin around zero is empty; use an absolute
        # window of the same relative size instead.
        half = cfg.margin * (fmax - fmin)
        lo, hi = -half, half
    else:
        lo = prev_threshold * (1.0 - cfg.margin)
        hi = prev_threshold * (1.0 + cfg.margin)
    lo = min(max(lo, fmin), fmax)
    hi = min(max(hi, fmin), fmax)
    return np.linspace(lo, hi, cfg.levels_update)


def explain(field: SaliencyField, detector: Detector, img: Image, t: int,
            prev: ExplanationMask | None, target: DetectionVector,
            cfg: SearchConfig) -> ExplanationMask:
    """Extract a sufficient explanation for one tracked object at frame t.

    t = 0 searches the field's full [min, max] range on ``levels_initial``
    levels; the lowest level occludes nothing, so a frame on which the
    target was actually detected is guaranteed a sufficient mask. t > 0
    searches ``levels_update`` levels inside the margin window around the
    previous threshold (clamped to the field's range) and, when no level in
    the window suffices, returns the previous mask with ``fallback_used``
    set and its sufficiency re-evaluated on the current frame.
    """
    if t == 0:
        if prev is not None:
            raise ValueError("first frame cannot carry a previous explanation")
    elif prev is None:
        raise ValueError("subsequent frames require the previous explanation")

    cfg.validate()
    levels = _search_levels(field, None if t == 0 else prev.threshold, cfg)

    def check(level: float) -> bool:
        return sufficiency_check(field, level, img, detector, target, cfg)

    try:
        threshold, bits = binary_search_threshold(field, levels, check)
    except NoSufficientLevel:
        if t == 0:
            raise
        still_ok = mask_sufficiency(prev.bits, img, detector, target, cfg)
        return ExplanationMask(bits=prev.bits.copy(), threshold=prev.threshold,
                               sufficient=still_ok, fallback_used=True)
    return ExplanationMask(bits=bits, threshold=threshold, sufficient=True,
                           fallback_used=False)


# -- mask file format ---------------------------------------------------------
#
# One bit per pixel, rows packed independently (each row padded to a whole
# byte), LSB-first within a byte; JSON sidecar alongside.

def encode_mask_bits(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=bool)
    return np.packbits(bits, axis=1, bitorder="little").tobytes()


def decode_mask_bits(data: bytes, width: int, height: int) -> np.ndarray:
    row_bytes = (width + 7) // 8
    if len(data) != row_bytes * height:
        raise InputOutputError(
            f"mask payload is {len(data)} bytes, expected {row_bytes * height} "
            f"for {width}x{height}")
    packed = np.frombuffer(data, dtype=np.uint8).reshape(height, row_bytes)
    return np.unpackbits(packed, axis=1, bitorder="little",
                         count=width).astype(bool)


def mask_sidecar(mask: ExplanationMask, frame_index: int, track_id: int) -> dict:
    return {
        "width": mask.width,
        "height": mask.height,
        "threshold": float(mask.threshold),
        "sufficient": bool(mask.sufficient),
        "fallback_used": bool(mask.fallback_used),
        "frame_index": int(frame_index),
        "track_id": int(track_id),
    }


def save_mask(path: str, mask: ExplanationMask, frame_index: int,
              track_id: int) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_mask_bits(mask.bits))
    with open(path + SIDECAR_SUFFIX, "w", encoding="utf-8") as fh:
        json.dump(mask_sidecar(mask, frame_index, track_id), fh)
        fh.write("\n")


def load_mask(path: str) -> tuple[ExplanationMask, dict]:
    sidecar_path = path + SIDECAR_SUFFIX
    if not os.path.exists(sidecar_path):
        raise InputOutputError(f"missing mask sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(path, "rb") as fh:
        data = fh.read()
    bits = decode_mask_bits(data, int(meta["width"]), int(meta["height"]))
    mask = ExplanationMask(bits=bits, threshold=float(meta["threshold"]),
                           sufficient=bool(meta["sufficient"]),
                           fallback_used=bool(meta.get("fallback_used", False)))
    return mask, meta
