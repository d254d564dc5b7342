"""Exact minimum enclosing circle (Welzl's algorithm, iterative move-to-front form)."""
from __future__ import annotations

import math
import random
from typing import Sequence

from .errors import InvalidInputError

Circle = tuple[float, float, float]

# relative slack for point-in-circle tests
_EPS = 1e-12


def _contains(c: Circle, p) -> bool:
    return math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1 + _EPS) + 1e-12


def circle_from_two(a, b) -> Circle:
    cx = (a[0] + b[0]) / 2.0
    cy = (a[1] + b[1]) / 2.0
    return (cx, cy, max(math.hypot(a[0] - cx, a[1] - cy), math.hypot(b[0] - cx, b[1] - cy)))


def circumcircle(a, b, c) -> Circle | None:
    """Circle through three points, or None when they are collinear."""
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    x = ox + (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    y = oy + (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return (x, y, r)


def _with_two(points, p, q) -> Circle:
    circ = circle_from_two(p, q)
    left = right = None
    px, py = p
    qx, qy = q
    for r in points:
        if _contains(circ, r):
            continue
        cross = (qx - px) * (r[1] - py) - (qy - py) * (r[0] - px)
        c = circumcircle(p, q, r)
        if c is None:
            continue
        side = (qx - px) * (c[1] - py) - (qy - py) * (c[0] - px)
        if cross > 0 and (left is None or side > (qx - px) * (left[1] - py) - (qy - py) * (left[0] - px)):
            left = c
        elif cross < 0 and (right is None or side < (qx - px) * (right[1] - py) - (qy - py) * (right[0] - px)):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _with_one(points, p) -> Circle:
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _contains(c, q):
            c = circle_from_two(p, q) if c[2] == 0.0 else _with_two(points[:i], p, q)
    return c


def min_enclosing_circle(points: Sequence[Sequence[float]], seed: int = 0) -> tuple[tuple[float, float], float]:
    """Smallest circle containing every point.

    Returns ``((cx, cy), radius)``. The input is shuffled with a fixed seed,
    so the result is deterministic.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if not pts:
        raise InvalidInputError("min_enclosing_circle needs at least one point")
    pts = list(dict.fromkeys(pts))
    random.Random(seed).shuffle(pts)
    c = None
    for i, p in enumerate(pts):
        if c is None or not _contains(c, p):
            c = _with_one(pts[: i + 1], p)
    return (c[0], c[1]), c[2]
