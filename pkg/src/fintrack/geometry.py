"""Box overlap and the segment/intersection primitives behind the tail-state ratio."""

from __future__ import annotations

from dataclasses import dataclass
from math import hypot, isfinite

import numpy as np

from .model import BBox


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (isfinite(self.x) and isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union has zero area."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def boxes_to_array(boxes: list[BBox]) -> np.ndarray:
    """Stack boxes into an (N, 4) float array of (x_min, y_min, x_max, y_max)."""
    if not boxes:
        return np.zeros((0, 4), dtype=float)
    return np.array([(b.x_min, b.y_min, b.x_max, b.y_max) for b in boxes], dtype=float)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (N, 4) and (M, 4) box arrays."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=float)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0.0, inter / union, 0.0)
    return out


def segment_intersection(
    p1: Point2, p2: Point2, q1: Point2, q2: Point2
) -> Point2 | None:
    """Intersection point of the closed segments [p1, p2] and [q1, q2].

    Returns None when the segments do not meet. Collinear overlapping
    segments yield the midpoint of the overlap interval, which keeps the
    result deterministic and continuous under perturbation. Zero-length
    segments are rejected.
    """
    rx, ry = p2.x - p1.x, p2.y - p1.y
    sx, sy = q2.x - q1.x, q2.y - q1.y
    if rx == 0.0 and ry == 0.0:
        raise ValueError("degenerate zero-length segment [p1, p2]")
    if sx == 0.0 and sy == 0.0:
        raise ValueError("degenerate zero-length segment [q1, q2]")

    denom = rx * sy - ry * sx
    qpx, qpy = q1.x - p1.x, q1.y - p1.y
    if denom != 0.0:
        t = (qpx * sy - qpy * sx) / denom
        u = (qpx * ry - qpy * rx) / denom
        if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
            return Point2(p1.x + t * rx, p1.y + t * ry)
        return None

    # Parallel. Non-collinear => disjoint.
    if qpx * ry - qpy * rx != 0.0:
        return None
    rr = rx * rx + ry * ry
    t0 = (qpx * rx + qpy * ry) / rr
    t1 = t0 + (sx * rx + sy * ry) / rr
    lo = max(0.0, min(t0, t1))
    hi = min(1.0, max(t0, t1))
    if lo > hi:
        return None
    tm = 0.5 * (lo + hi)
    return Point2(p1.x + tm * rx, p1.y + tm * ry)


def tip_ratio(anf: Point2, apf: Point2, tf: Point2, body: Point2) -> float | None:
    """Tail state from four component centers, as a ratio in [0, 1].

    The state is where the line of sight from the body center through the
    tail fin crosses the segment between the adipose and anal fin centers,
    measured from the adipose end. None when the segments do not cross
    (the tail in such poses gives no reading and the series records a gap).
    """
    if anf.x == apf.x and anf.y == apf.y:
        raise ValueError("anal and adipose fin centers coincide; ratio undefined")
    ip = segment_intersection(anf, apf, tf, body)
    if ip is None:
        return None
    ratio = hypot(ip.x - apf.x, ip.y - apf.y) / hypot(anf.x - apf.x, anf.y - apf.y)
    return min(1.0, max(0.0, ratio))
