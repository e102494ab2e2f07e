"""Planar geometry for convex prism footprints and the parallel-jaw gripper."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

Circle = Tuple[float, float, float]  # (cx, cy, r)

_MULTIPLICATIVE_EPSILON = 1 + 1e-14


@dataclass(frozen=True)
class ParallelJawGripper:
    """Two flat fingers closing along the gripper x axis.

    All values in meters. The finger face is `face_width` wide (horizontal,
    across the jaw axis) and `finger_length` tall; the gripper pose z is the
    height of the finger bottom edge.
    """

    face_width: float = 0.024
    finger_length: float = 0.018
    finger_thickness: float = 0.008
    opening_width: float = 0.10

    @property
    def half_face(self) -> float:
        return 0.5 * self.face_width

    @property
    def half_opening(self) -> float:
        return 0.5 * self.opening_width


def rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


def jaw_axes(yaw: float) -> Tuple[np.ndarray, np.ndarray]:
    """(u, v): closing direction and finger-face direction in the world frame."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([c, s]), np.array([-s, c])


def transform_points(local: np.ndarray, pose: Sequence[float]) -> np.ndarray:
    x, y, yaw = pose
    return np.asarray(local, dtype=np.float64) @ rotation(yaw).T + np.array([x, y])


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-15:
        return poly.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)


def is_convex_ccw(poly: np.ndarray, tol: float = 1e-12) -> bool:
    if len(poly) < 3:
        return False
    edges = np.roll(poly, -1, axis=0) - poly
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    return bool(np.all(cross > tol))


def points_in_convex_polygon(points: np.ndarray, poly: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside (or on) a counter-clockwise convex polygon."""
    points = np.atleast_2d(points)
    edges = np.roll(poly, -1, axis=0) - poly
    rel = points[:, None, :] - poly[None, :, :]
    cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
    return np.all(cross >= -eps, axis=1)


def clip_halfplane(poly: np.ndarray, normal: Sequence[float], offset: float) -> np.ndarray:
    """Sutherland-Hodgman: keep the part of `poly` with normal . p <= offset."""
    if len(poly) == 0:
        return poly
    n = np.asarray(normal, dtype=np.float64)
    out = []
    d = poly @ n - offset
    count = len(poly)
    for i in range(count):
        p, q = poly[i], poly[(i + 1) % count]
        dp, dq = d[i], d[(i + 1) % count]
        if dp <= 0.0:
            out.append(p)
        if (dp < 0.0 < dq) or (dq < 0.0 < dp):
            out.append(p + (q - p) * (dp / (dp - dq)))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def clip_to_strip(poly_st: np.ndarray, half_width: float) -> np.ndarray:
    """Part of a polygon given in (s, t) coordinates with |t| <= half_width."""
    clipped = clip_halfplane(poly_st, (0.0, 1.0), half_width)
    return clip_halfplane(clipped, (0.0, -1.0), half_width)


def slice_at(poly_st: np.ndarray, s: float) -> Optional[Tuple[float, float]]:
    """Extent in t of the convex polygon along the line s = const, or None."""
    ts = []
    count = len(poly_st)
    for i in range(count):
        p, q = poly_st[i], poly_st[(i + 1) % count]
        if p[0] == s:
            ts.append(p[1])
        if (p[0] - s) * (q[0] - s) < 0.0:
            ts.append(p[1] + (s - p[0]) / (q[0] - p[0]) * (q[1] - p[1]))
    if not ts:
        return None
    return float(min(ts)), float(max(ts))


def edge_position(poly: np.ndarray, point: Sequence[float]) -> Tuple[float, float]:
    """For the polygon edge nearest `point`: (distance to the closer vertex, edge length)."""
    p = np.asarray(point, dtype=np.float64)
    best = (math.inf, 0.0, 0.0)
    count = len(poly)
    for i in range(count):
        a, b = poly[i], poly[(i + 1) % count]
        e = b - a
        length = float(np.hypot(*e))
        if length == 0.0:
            continue
        frac = float(np.clip(np.dot(p - a, e) / (length * length), 0.0, 1.0))
        dist = float(np.hypot(*(a + frac * e - p)))
        if dist < best[0]:
            best = (dist, min(frac, 1.0 - frac) * length, length)
    return best[1], best[2]


# Smallest enclosing circle (Welzl, incremental form). Points are visited in
# the given order so the result is a pure function of the polygon.

def enclosing_circle(points: np.ndarray) -> Circle:
    pts = [(float(x), float(y)) for x, y in points]
    c: Optional[Circle] = None
    for i, p in enumerate(pts):
        if c is None or not _in_circle(p, c):
            c = _circle_one_point(pts[: i + 1], p)
    if c is None:
        raise ValueError("enclosing_circle needs at least one point")
    return c


def _circle_one_point(points, p) -> Circle:
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _in_circle(q, c):
            if c[2] == 0.0:
                c = _diameter(p, q)
            else:
                c = _circle_two_points(points[: i + 1], p, q)
    return c


def _circle_two_points(points, p, q) -> Circle:
    circ = _diameter(p, q)
    left = right = None
    px, py = p
    qx, qy = q
    for r in points:
        if _in_circle(r, circ):
            continue
        cross = _cross(px, py, qx, qy, r[0], r[1])
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        if cross > 0.0 and (left is None or _cross(px, py, qx, qy, c[0], c[1]) > _cross(px, py, qx, qy, left[0], left[1])):
            left = c
        elif cross < 0.0 and (right is None or _cross(px, py, qx, qy, c[0], c[1]) < _cross(px, py, qx, qy, right[0], right[1])):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _diameter(a, b) -> Circle:
    cx = (a[0] + b[0]) / 2
    cy = (a[1] + b[1]) / 2
    return (cx, cy, max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1])))


def _circumcircle(a, b, c) -> Optional[Circle]:
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(math.hypot(x - a[0], y - a[1]), math.hypot(x - b[0], y - b[1]), math.hypot(x - c[0], y - c[1]))
    return (x, y, r)


def _in_circle(p, c: Circle) -> bool:
    return math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * _MULTIPLICATIVE_EPSILON


def _cross(x0, y0, x1, y1, x2, y2) -> float:
    return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)


GRIPPER = ParallelJawGripper()
