"""Saliency fields treated as probability mass functions, and their warp.

A field holds one non-negative weight per pixel of the frame (full-frame
resolution, so no resampling is ever needed at explanation time). After
:func:`normalize` the grid sums to one and can be propagated between frames
with :func:`warp`: each destination pixel center is pulled back through the
inverse scale/translation and the source grid is sampled bilinearly, with
anything outside the source contributing zero. The result is renormalized —
interpolation and frame-border cropping both leak mass — and the
pre-renormalization total is kept for diagnostics.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InputOutputError, MassLost, ZeroMass
from .geometry import BBox, ScaleTranslate

DEFAULT_MASS_FLOOR = 1e-6

GRID_SUFFIX = ".sal"
SIDECAR_SUFFIX = ".json"


@dataclass
class SaliencyField:
    """A per-pixel weight grid, shape (height, width), float64 in memory.

    ``normalized`` marks a grid that sums to one; ``pre_renorm_mass`` records
    the total mass a warp (or normalize) saw before rescaling.
    """

    values: np.ndarray
    normalized: bool = False
    pre_renorm_mass: float | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"field must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")
        if np.any(self.values < 0.0):
            raise ValueError("field contains negative values")

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    def total_mass(self) -> float:
        return float(self.values.sum(dtype=np.float64))

    def argmax_pixel(self) -> tuple[int, int]:
        """(ix, iy) of the largest cell; row-major first on ties."""
        flat = int(np.argmax(self.values))
        iy, ix = divmod(flat, self.width)
        return ix, iy


def normalize(f: SaliencyField) -> SaliencyField:
    """Rescale a field to unit mass, preserving proportions."""
    total = f.values.sum(dtype=np.float64)
    if total <= 0.0:
        raise ZeroMass("cannot normalize a field with zero total mass")
    return SaliencyField(f.values / total, normalized=True,
                         pre_renorm_mass=float(total))


def warp_values(values: np.ndarray, t: ScaleTranslate) -> np.ndarray:
    """Raw remap kernel: inverse-map + bilinear sample, no renormalization.

    For each destination pixel center q, evaluates the source grid at
    S^-1(T^-1(q)) by bilinear interpolation over source pixel centers;
    source coordinates outside the grid contribute 0. Output shape equals
    input shape. The inverse map is evaluated as ``q*scale + offset`` so the
    identity transform reproduces the input bit-for-bit.
    """
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    su, sv, ou, ov = t.inverse_coefficients()

    # Source positions of destination pixel centers, expressed as fractional
    # cell indices (center of cell i sits at coordinate i + 0.5).
    dest_u = np.arange(w, dtype=np.float64) + 0.5
    dest_v = np.arange(h, dtype=np.float64) + 0.5
    x = dest_u * su + ou - 0.5
    y = dest_v * sv + ov - 0.5

    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def col_pick(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ok = (idx >= 0) & (idx < w)
        return np.where(ok, idx, 0), ok

    def row_pick(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ok = (idx >= 0) & (idx < h)
        return np.where(ok, idx, 0), ok

    cx0, okx0 = col_pick(x0)
    cx1, okx1 = col_pick(x0 + 1)
    ry0, oky0 = row_pick(y0)
    ry1, oky1 = row_pick(y0 + 1)

    # Gather the four neighbours as (h, w) grids; out-of-range cells are 0.
    v00 = values[np.ix_(ry0, cx0)] * (oky0[:, None] & okx0[None, :])
    v01 = values[np.ix_(ry0, cx1)] * (oky0[:, None] & okx1[None, :])
    v10 = values[np.ix_(ry1, cx0)] * (oky1[:, None] & okx0[None, :])
    v11 = values[np.ix_(ry1, cx1)] * (oky1[:, None] & okx1[None, :])

    wx1 = fx[None, :]
    wx0 = 1.0 - wx1
    wy1 = fy[:, None]
    wy0 = 1.0 - wy1

    out = (v00 * wy0 * wx0 + v01 * wy0 * wx1 +
           v10 * wy1 * wx0 + v11 * wy1 * wx1)
    # Bilinear weights are non-negative; clip numeric dust only.
    np.maximum(out, 0.0, out=out)
    return out


def warp(f: SaliencyField, t: ScaleTranslate,
         mass_floor: float = DEFAULT_MASS_FLOOR) -> SaliencyField:
    """Propagate a normalized field through a scale/translation.

    Raises MassLost when the pre-renormalization mass drops below
    ``mass_floor`` — the signal that the object warped out of frame.
    """
    if not f.normalized:
        raise ValueError("warp expects a normalized field")
    raw = warp_values(f.values, t)
    total = float(raw.sum(dtype=np.float64))
    if total < mass_floor:
        raise MassLost(total, mass_floor)
    return SaliencyField(raw / total, normalized=True, pre_renorm_mass=total)


def mass_inside(f: SaliencyField, b: BBox) -> float:
    """Total weight of the cells whose pixel centers fall inside the box."""
    h, w = f.values.shape
    cx = np.arange(w, dtype=np.float64) + 0.5
    cy = np.arange(h, dtype=np.float64) + 0.5
    in_u = (cx >= b.u_min) & (cx <= b.u_max)
    in_v = (cy >= b.v_min) & (cy <= b.v_max)
    if not in_u.any() or not in_v.any():
        return 0.0
    return float(f.values[np.ix_(in_v, in_u)].sum(dtype=np.float64))


def top_mass_bbox_check(f: SaliencyField, b: BBox) -> float:
    """Fraction of a normalized field's mass inside a box (diagnostic)."""
    return mass_inside(f, b)


# -- grid file format --------------------------------------------------------
#
# A grid file is the raw little-endian float32 values, row-major, nothing
# else; a JSON sidecar at <path>.json carries the dimensions and provenance.
# Round trips are bit-exact.

def encode_grid(f: SaliencyField) -> bytes:
    return f.values.astype("<f4").tobytes()


def grid_sidecar(f: SaliencyField, frame_index: int, track_id: int) -> dict:
    return {
        "width": f.width,
        "height": f.height,
        "frame_index": int(frame_index),
        "track_id": int(track_id),
        "normalized": bool(f.normalized),
        "pre_renorm_mass": f.pre_renorm_mass,
    }


def save_grid(path: str, f: SaliencyField, frame_index: int, track_id: int) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_grid(f))
    with open(path + SIDECAR_SUFFIX, "w", encoding="utf-8") as fh:
        json.dump(grid_sidecar(f, frame_index, track_id), fh)
        fh.write("\n")


def decode_grid(data: bytes, width: int, height: int,
                normalized: bool = False,
                pre_renorm_mass: float | None = None) -> SaliencyField:
    expected = width * height * 4
    if len(data) != expected:
        raise InputOutputError(
            f"grid payload is {len(data)} bytes, expected {expected} "
            f"for {width}x{height}")
    values = np.frombuffer(data, dtype="<f4").reshape(height, width)
    return SaliencyField(values.astype(np.float64), normalized=normalized,
                         pre_renorm_mass=pre_renorm_mass)


def load_grid(path: str) -> tuple[SaliencyField, dict]:
    sidecar_path = path + SIDECAR_SUFFIX
    if not os.path.exists(sidecar_path):
        raise InputOutputError(f"missing grid sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(path, "rb") as fh:
        data = fh.read()
    f = decode_grid(data, int(meta["width"]), int(meta["height"]),
                    normalized=bool(meta.get("normalized", False)),
                    pre_renorm_mass=meta.get("pre_renorm_mass"))
    return f, meta
