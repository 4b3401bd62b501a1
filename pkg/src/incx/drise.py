"""Mask-based black-box saliency bootstrap.

Run once per newborn track: sample random low-resolution binary grids,
bilinearly upsample them with a random sub-cell crop, occlude the frame with
each mask, and weight every mask by how well the detector's output on the
masked frame still matches the target detection (IoU x class-probability
cosine x objectness). The saliency field is the weighted sum of masks,
normalized to a pmf. Deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detectors.base import Detector, DetectionVector
from .errors import InvalidSpec, ZeroMass
from .geometry import iou
from .images import Image, apply_soft_mask
from .saliency import SaliencyField, normalize

DETECT_BATCH_SIZE = 32


@dataclass(frozen=True)
class MaskSpec:
    n_masks: int = 1000
    grid: tuple[int, int] = (4, 4)  # (rows, cols)
    p: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.n_masks < 1:
            raise InvalidSpec(f"n_masks must be >= 1, got {self.n_masks}")
        if self.grid[0] < 1 or self.grid[1] < 1:
            raise InvalidSpec(f"grid dimensions must be >= 1, got {self.grid}")
        # p = 0 is degenerate (all-zero masks) but well defined for the
        # generator; the pipeline config rejects it separately.
        if not (0.0 <= self.p <= 1.0):
            raise InvalidSpec(f"keep probability {self.p} outside [0, 1]")


def _resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample with the half-pixel mapping and edge clamping."""
    in_h, in_w = grid.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, in_h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, in_w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1.0 - fx) + grid[np.ix_(y0, x1)] * fx
    bot = grid[np.ix_(y1, x0)] * (1.0 - fx) + grid[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bot * fy


def generate_masks(spec: MaskSpec, width: int, height: int) -> np.ndarray:
    """Soft occlusion masks, shape (n_masks, height, width), values in [0,1].

    Each mask: Bernoulli(p) cells on a (rows, cols) grid, upsampled to
    (height + cell_h, width + cell_w), then cropped at a uniformly random
    sub-cell offset. Values stay fractional after the upsample.
    """
    spec.validate()
    rows, cols = spec.grid
    cell_h = math.ceil(height / rows)
    cell_w = math.ceil(width / cols)
    rng = np.random.default_rng(spec.seed)
    masks = np.empty((spec.n_masks, height, width), dtype=np.float32)
    for i in range(spec.n_masks):
        grid = (rng.random((rows, cols)) < spec.p).astype(np.float64)
        up = _resize_bilinear(grid, height + cell_h, width + cell_w)
        dy = int(rng.integers(0, cell_h))
        dx = int(rng.integers(0, cell_w))
        masks[i] = up[dy:dy + height, dx:dx + width]
    return masks


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def detection_similarity(target: DetectionVector,
                         proposals: list[DetectionVector]) -> float:
    """How well any proposal reproduces the target detection, in [0, 1]:
    max over proposals of IoU x cosine(class probs) x objectness."""
    best = 0.0
    for prop in proposals:
        if prop.class_probs.shape != target.class_probs.shape:
            continue
        score = (iou(target.bbox, prop.bbox)
                 * cosine_similarity(target.class_probs, prop.class_probs)
                 * prop.objectness)
        if score > best:
            best = score
    return best


def drise_saliency(img: Image, target: DetectionVector, detector: Detector,
                   spec: MaskSpec) -> SaliencyField:
    """Bootstrap saliency for one detection: normalized weighted sum of masks.

    Invokes the detector once per mask (batched); raises ZeroMass if no
    masked frame ever re-fired the target.
    """
    masks = generate_masks(spec, img.width, img.height)
    weights = np.empty(spec.n_masks, dtype=np.float64)
    for start in range(0, spec.n_masks, DETECT_BATCH_SIZE):
        chunk = masks[start:start + DETECT_BATCH_SIZE]
        batch = [apply_soft_mask(img, m) for m in chunk]
        results = detector.detect_batch(batch)
        for j, proposals in enumerate(results):
            weights[start + j] = detection_similarity(target, proposals)
    values = np.tensordot(weights, masks.astype(np.float64), axes=(0, 0))
    try:
        return normalize(SaliencyField(values))
    except ZeroMass:
        raise ZeroMass(
            "no occlusion mask re-fired the target detection; "
            "cannot bootstrap a saliency field") from None
