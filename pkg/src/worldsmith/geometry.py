"""Plane geometry for brush capture: hulls, polygon fills, stroke rasters.

Pixel convention used everywhere: pixel (x, y) covers the half-open unit
square [x, x+1) x [y, y+1), and its geometric center sits at (x+0.5, y+0.5).
Free-hand coordinates snap to the center of the pixel that contains them
before rasterization.  Orientation language (counterclockwise) refers to the
mathematical plane with y pointing up.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]


def snap_index(coord: float) -> int:
    """Index of the pixel whose unit square contains this coordinate."""
    return int(math.floor(coord))


def snap_center(point: Sequence[float], width: int, height: int) -> Point:
    """Snap a free coordinate to the containing pixel's center, clamped in-canvas."""
    ix = min(max(snap_index(point[0]), 0), width - 1)
    iy = min(max(snap_index(point[1]), 0), height - 1)
    return (ix + 0.5, iy + 0.5)


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[Sequence[float]]) -> list[Point]:
    """Strict convex hull, counterclockwise, starting at the lexicographic minimum.

    Collinear boundary points and duplicates are dropped.  Degenerate inputs
    return what is left: a single point, or the two endpoints of a segment.
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return pts
    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def fill_polygon(vertices: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Even-odd interior of a closed polygon, sampled at pixel centers.

    A pixel is inside when an odd number of edge crossings lie strictly to
    the right of its center.  An edge crosses scanline yc when
    (y1 > yc) != (y2 > yc), at x1 + (yc - y1) * (x2 - x1) / (y2 - y1).
    """
    mask = np.zeros((height, width), dtype=bool)
    if len(vertices) < 3:
        return mask
    vx = np.array([v[0] for v in vertices], dtype=np.float64)
    vy = np.array([v[1] for v in vertices], dtype=np.float64)
    x1, x2 = vx, np.roll(vx, -1)
    y1, y2 = vy, np.roll(vy, -1)
    centers_x = np.arange(width, dtype=np.float64) + 0.5
    row_lo = max(0, snap_index(vy.min()))
    row_hi = min(height - 1, snap_index(vy.max()))
    for row in range(row_lo, row_hi + 1):
        yc = row + 0.5
        hits = (y1 > yc) != (y2 > yc)
        if not hits.any():
            continue
        cx = x1[hits] + (yc - y1[hits]) * (x2[hits] - x1[hits]) / (y2[hits] - y1[hits])
        cx.sort()
        right = cx.size - np.searchsorted(cx, centers_x, side="right")
        mask[row] = right % 2 == 1
    return mask


def stroke_mask(
    points: Sequence[Point], stroke_width: float, width: int, height: int
) -> np.ndarray:
    """Pixels whose centers lie within stroke_width/2 of the polyline.

    Points are taken as already snapped; a single point renders as a disc.
    """
    if stroke_width <= 0:
        raise ValueError("stroke width must be positive")
    radius = stroke_width / 2.0
    mask = np.zeros((height, width), dtype=bool)
    pts = list(points)
    if not pts:
        return mask
    segments = list(zip(pts, pts[1:])) if len(pts) > 1 else [(pts[0], pts[0])]
    for (ax, ay), (bx, by) in segments:
        x_lo = max(0, snap_index(min(ax, bx) - radius))
        x_hi = min(width - 1, snap_index(max(ax, bx) + radius))
        y_lo = max(0, snap_index(min(ay, by) - radius))
        y_hi = min(height - 1, snap_index(max(ay, by) + radius))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1, dtype=np.float64) + 0.5
        py = np.arange(y_lo, y_hi + 1, dtype=np.float64) + 0.5
        gx, gy = np.meshgrid(px, py)
        d2 = segment_distance_sq(gx, gy, ax, ay, bx, by)
        hit = d2 <= radius * radius
        mask[y_lo : y_hi + 1, x_lo : x_hi + 1] |= hit
    return mask


def segment_distance_sq(px, py, ax: float, ay: float, bx: float, by: float):
    """Squared distance from points to segment (a, b); works elementwise."""
    dx = bx - ax
    dy = by - ay
    length_sq = dx * dx + dy * dy
    if length_sq == 0:
        return (px - ax) ** 2 + (py - ay) ** 2
    t = ((px - ax) * dx + (py - ay) * dy) / length_sq
    t = np.clip(t, 0.0, 1.0)
    return (px - (ax + t * dx)) ** 2 + (py - (ay + t * dy)) ** 2


def polygon_region_mask(vertices: Sequence[Point], width: int, height: int) -> np.ndarray:
    """Filled polygon plus its one-pixel outline.

    The even-odd interior alone excludes pixels whose centers land exactly on
    the right and bottom edges, so the closed outline is stroked at width 1
    on top.  Every vertex pixel is then guaranteed to be covered.
    """
    mask = fill_polygon(vertices, width, height)
    if len(vertices) >= 2:
        closed = list(vertices) + [vertices[0]]
        mask |= stroke_mask(closed, 1.0, width, height)
    elif len(vertices) == 1:
        mask |= stroke_mask(list(vertices), 1.0, width, height)
    return mask
