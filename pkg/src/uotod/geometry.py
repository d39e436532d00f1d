"""Bounding boxes and pairwise localization costs.

Boxes are stored in relative center-size form ``(cx, cy, w, h)``. Corner form
``(x0, y0, x1, y1)`` is derived on demand. The scalar functions operate on
:class:`Box` values; the ``pairwise_*`` variants take ``(N, 4)`` arrays in
center-size form and return ``(N, M)`` matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Box",
    "iou",
    "giou",
    "l1_box",
    "to_corners",
    "pairwise_iou",
    "pairwise_giou",
    "pairwise_l1",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in relative center-size coordinates."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite, got {vals}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center must lie in [0, 1], got ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size must lie in (0, 1], got ({self.w}, {self.h})")

    @classmethod
    def from_corners(cls, x0, y0, x1, y1) -> "Box":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)


def _overlap(a: Box, b: Box) -> tuple[float, float]:
    """Return (intersection area, union area)."""
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    # areas from corners so identical boxes give exactly inter == union
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    return inter, max(area_a + area_b - inter, inter)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when they are disjoint."""
    inter, union = _overlap(a, b)
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: ``IoU - |hull \\ union| / |hull|``, in ``[-1, 1]``.

    The hull is the smallest axis-aligned box enclosing both inputs.
    """
    inter, union = _overlap(a, b)
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    hull = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return inter / union - max(hull - union, 0.0) / hull


def l1_box(a: Box, b: Box) -> float:
    """Sum of absolute differences of the center-size coordinates."""
    return abs(a.cx - b.cx) + abs(a.cy - b.cy) + abs(a.w - b.w) + abs(a.h - b.h)


def _as_boxes(x) -> np.ndarray:
    if isinstance(x, Box):
        return x.as_array()[None, :]
    if not isinstance(x, np.ndarray):
        x = [b.as_array() if isinstance(b, Box) else b for b in x]
    arr = np.asarray(x, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected boxes of shape (N, 4), got {arr.shape}")
    return arr


def to_corners(boxes) -> np.ndarray:
    """Convert ``(N, 4)`` center-size boxes to corner form."""
    b = _as_boxes(boxes)
    half = b[:, 2:] / 2
    return np.concatenate([b[:, :2] - half, b[:, :2] + half], axis=1)


def _pairwise_overlap(b1: np.ndarray, b2: np.ndarray):
    c1, c2 = to_corners(b1), to_corners(b2)
    area1 = (c1[:, 2] - c1[:, 0]) * (c1[:, 3] - c1[:, 1])
    area2 = (c2[:, 2] - c2[:, 0]) * (c2[:, 3] - c2[:, 1])
    lt = np.maximum(c1[:, None, :2], c2[None, :, :2])
    rb = np.minimum(c1[:, None, 2:], c2[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = np.maximum(area1[:, None] + area2[None, :] - inter, inter)
    return c1, c2, inter, union


def pairwise_iou(boxes1, boxes2) -> np.ndarray:
    b1, b2 = _as_boxes(boxes1), _as_boxes(boxes2)
    _, _, inter, union = _pairwise_overlap(b1, b2)
    return inter / union


def pairwise_giou(boxes1, boxes2) -> np.ndarray:
    b1, b2 = _as_boxes(boxes1), _as_boxes(boxes2)
    c1, c2, inter, union = _pairwise_overlap(b1, b2)
    lt = np.minimum(c1[:, None, :2], c2[None, :, :2])
    rb = np.maximum(c1[:, None, 2:], c2[None, :, 2:])
    wh = rb - lt
    hull = wh[..., 0] * wh[..., 1]
    return inter / union - np.maximum(hull - union, 0.0) / hull


def pairwise_l1(boxes1, boxes2) -> np.ndarray:
    b1, b2 = _as_boxes(boxes1), _as_boxes(boxes2)
    return np.abs(b1[:, None, :] - b2[None, :, :]).sum(axis=-1)
