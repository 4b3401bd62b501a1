"""Deterministic overlay rendering: heat colormap over the frame, the
explanation boundary, and the detection box. Pure numpy; identical inputs
produce identical pixels."""

from __future__ import annotations

import numpy as np

from .errors import FieldMismatch
from .explain import ExplanationMask
from .geometry import BBox
from .images import Image
from .saliency import SaliencyField

HEAT_ALPHA = 0.55
BOUNDARY_COLOR = (0, 255, 0)
BBOX_COLOR = (255, 255, 255)


def heat_color(t: np.ndarray) -> np.ndarray:
    """Piecewise-linear blue->cyan->yellow->red map for t in [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * t - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * t - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * t - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def mask_boundary(bits: np.ndarray) -> np.ndarray:
    """True-region pixels with at least one 4-neighbour outside the region."""
    if not bits.any():
        return np.zeros_like(bits)
    inner = np.zeros_like(bits)
    inner[1:-1, 1:-1] = (bits[1:-1, 1:-1] & bits[:-2, 1:-1] & bits[2:, 1:-1]
                         & bits[1:-1, :-2] & bits[1:-1, 2:])
    return bits & ~inner


def render_overlay(frame: Image, field: SaliencyField | None,
                   mask: ExplanationMask | None, bbox: BBox | None) -> Image:
    h, w = frame.height, frame.width
    out = frame.pixels.astype(np.float64)

    if field is not None:
        if (field.height, field.width) != (h, w):
            raise FieldMismatch("field and frame dimensions differ")
        peak = float(field.values.max())
        if peak > 0.0:
            weight = field.values / peak
            alpha = (HEAT_ALPHA * weight)[:, :, None]
            out = (1.0 - alpha) * out + alpha * (heat_color(weight) * 255.0)

    out = np.rint(out).astype(np.uint8)

    if mask is not None:
        if (mask.height, mask.width) != (h, w):
            raise FieldMismatch("mask and frame dimensions differ")
        out[mask_boundary(mask.bits)] = np.array(BOUNDARY_COLOR, dtype=np.uint8)

    if bbox is not None:
        u0 = int(np.clip(np.floor(bbox.u_min), 0, w - 1))
        v0 = int(np.clip(np.floor(bbox.v_min), 0, h - 1))
        u1 = int(np.clip(np.ceil(bbox.u_max) - 1, 0, w - 1))
        v1 = int(np.clip(np.ceil(bbox.v_max) - 1, 0, h - 1))
        color = np.array(BBOX_COLOR, dtype=np.uint8)
        out[v0, u0:u1 + 1] = color
        out[v1, u0:u1 + 1] = color
        out[v0:v1 + 1, u0] = color
        out[v0:v1 + 1, u1] = color

    return Image(out)
