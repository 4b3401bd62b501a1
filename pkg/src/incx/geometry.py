"""Boxes, centers, IoU and the scale/translation maps the engine composes.

All coordinates are continuous (sub-pixel). The convention throughout the
package: pixel ``(ix, iy)`` occupies the unit square ``[ix, ix+1) x
[iy, iy+1)`` and its center is ``(ix + 0.5, iy + 0.5)``. Rasterization only
happens in the saliency-field and detector layers; everything here is exact
arithmetic over R^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateBox


@dataclass(frozen=True)
class Point2:
    u: float
    v: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"non-finite point ({self.u}, {self.v})")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in corner form. The one canonical box form internally;
    center/width/height views exist only as derived properties."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self) -> None:
        vals = (self.u_min, self.v_min, self.u_max, self.v_max)
        if not all(math.isfinite(x) for x in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError(f"inverted box {vals}")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> tuple[Point2, Point2, Point2, Point2]:
        return (
            Point2(self.u_min, self.v_min),
            Point2(self.u_max, self.v_min),
            Point2(self.u_max, self.v_max),
            Point2(self.u_min, self.v_max),
        )


def bbox_center(b: BBox) -> Point2:
    """Center of the box: the midpoint of each coordinate's extent."""
    return Point2((b.u_min + b.u_max) / 2.0, (b.v_min + b.v_max) / 2.0)


def bbox_of_points(points) -> BBox:
    """Tight box enclosing a non-empty set of points."""
    pts = list(points)
    if not pts:
        raise ValueError("empty point set has no bounding box")
    us = [p.u for p in pts]
    vs = [p.v for p in pts]
    return BBox(min(us), min(vs), max(us), max(vs))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Disjoint boxes score 0; so do two boxes whose union has zero area
    (no overlap evidence rather than 0/0).
    """
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class ScaleTranslate:
    """Scaling about an anchor followed by a translation.

    Maps ``p`` to ``mu + gamma * (p - anchor)`` with ``gamma`` a positive
    per-axis (diagonal) scale. Always invertible.
    """

    gamma_u: float
    gamma_v: float
    mu: Point2
    anchor: Point2

    def __post_init__(self) -> None:
        if not (self.gamma_u > 0.0 and self.gamma_v > 0.0):
            raise ValueError(f"scale factors must be positive, got "
                             f"({self.gamma_u}, {self.gamma_v})")
        if not (math.isfinite(self.gamma_u) and math.isfinite(self.gamma_v)):
            raise ValueError("non-finite scale factors")

    @classmethod
    def identity(cls) -> "ScaleTranslate":
        origin = Point2(0.0, 0.0)
        return cls(1.0, 1.0, origin, origin)

    def apply(self, p: Point2) -> Point2:
        return Point2(
            self.mu.u + self.gamma_u * (p.u - self.anchor.u),
            self.mu.v + self.gamma_v * (p.v - self.anchor.v),
        )

    def apply_bbox(self, b: BBox) -> BBox:
        lo = self.apply(Point2(b.u_min, b.v_min))
        hi = self.apply(Point2(b.u_max, b.v_max))
        return BBox(lo.u, lo.v, hi.u, hi.v)

    def invert(self) -> "ScaleTranslate":
        """The inverse map: q = mu + gamma*(p - anchor) solved for p gives
        p = anchor + (1/gamma)*(q - mu)."""
        return ScaleTranslate(
            1.0 / self.gamma_u,
            1.0 / self.gamma_v,
            mu=self.anchor,
            anchor=self.mu,
        )

    def inverse_coefficients(self) -> tuple[float, float, float, float]:
        """Per-axis linear form of the inverse map: src = q*scale + offset.

        Computed so that the identity transform yields scale exactly 1.0 and
        offset exactly 0.0 per axis, keeping identity warps bit-exact.
        """
        su = 1.0 / self.gamma_u
        sv = 1.0 / self.gamma_v
        return su, sv, self.anchor.u - self.mu.u * su, self.anchor.v - self.mu.v * sv


def transform_from_boxes(prev: BBox, next_: BBox) -> ScaleTranslate:
    """The scale/translation that carries one box onto its successor.

    Scale is the per-axis ratio of extents, taken about the center of the
    earlier box; the translation lands on the center of the later box. The
    four corners of ``prev`` map exactly onto the four corners of ``next_``.
    """
    if prev.width <= 0.0 or prev.height <= 0.0:
        raise DegenerateBox(
            f"cannot derive a transform from a box with extents "
            f"{prev.width} x {prev.height}"
        )
    return ScaleTranslate(
        gamma_u=next_.width / prev.width,
        gamma_v=next_.height / prev.height,
        mu=bbox_center(next_),
        anchor=bbox_center(prev),
    )


def compose(outer: ScaleTranslate, inner: ScaleTranslate) -> ScaleTranslate:
    """The single scale/translation equal to ``outer`` after ``inner``.

    outer(inner(p)) = mu2 + g2*(mu1 + g1*(p - a1) - a2)
                    = [mu2 + g2*(mu1 - a2)] + (g2*g1)*(p - a1)
    """
    mu = Point2(
        outer.mu.u + outer.gamma_u * (inner.mu.u - outer.anchor.u),
        outer.mu.v + outer.gamma_v * (inner.mu.v - outer.anchor.v),
    )
    return ScaleTranslate(
        gamma_u=outer.gamma_u * inner.gamma_u,
        gamma_v=outer.gamma_v * inner.gamma_v,
        mu=mu,
        anchor=inner.anchor,
    )
